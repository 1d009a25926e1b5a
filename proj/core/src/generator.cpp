#include "relcrp/generator.hpp"

#include <cmath>
#include <sstream>

#include "relcrp/model.hpp"
#include "relcrp/model_state.hpp"

namespace relcrp {
namespace {

std::shared_ptr<const UserGraph> random_graph(const GenConfig& config, Rng& rng) {
  std::vector<std::string> regions;
  for (std::size_t r = 0; r < config.regions; ++r) regions.push_back("r" + std::to_string(r));
  std::vector<User> users(config.users);
  const double p = config.users > 1 ? config.mean_degree / static_cast<double>(config.users - 1) : 0.0;
  for (std::size_t u = 0; u < config.users; ++u) {
    users[u].label = "u" + std::to_string(u);
    users[u].region = config.region_scheme == RegionScheme::RoundRobin
                          ? static_cast<RegionId>(u % config.regions)
                          : static_cast<RegionId>(rng() % config.regions);
  }
  for (std::size_t u = 0; u < config.users; ++u)
    for (std::size_t v = 0; v < config.users; ++v)
      if (u != v && uniform01(rng) < p) users[u].followees.push_back(static_cast<UserId>(v));
  return std::make_shared<const UserGraph>(std::move(users), std::move(regions));
}

std::array<double, kRelationshipCount> draw_personality(const Hyperparams& hyper,
                                                        const std::array<double, kRelationshipCount>& shift,
                                                        Rng& rng) {
  const auto members = hyper.factors.members();
  std::vector<double> conc;
  for (auto f : members) conc.push_back(hyper.alpha_of(f) + shift[index_of(f)]);
  const auto draw = sample_dirichlet(conc, rng);
  std::array<double, kRelationshipCount> pi{};
  for (std::size_t i = 0; i < members.size(); ++i) pi[index_of(members[i])] = draw[i];
  return pi;
}

std::vector<double> draw_topic(double beta, const std::vector<double>* shift, std::size_t V, Rng& rng) {
  std::vector<double> conc(V, beta);
  if (shift)
    for (std::size_t v = 0; v < V; ++v) conc[v] += (*shift)[v];
  return sample_dirichlet(conc, rng);
}

}  // namespace

void GenConfig::validate() const {
  if (!graph && (users == 0 || regions == 0)) throw Error("generator needs at least one user and one region");
  if (epochs == 0 || posts_per_epoch == 0) throw Error("generator needs at least one epoch and one post");
  if (min_tokens == 0 || max_tokens < min_tokens) throw Error("token range must satisfy 1 <= min <= max");
  if (vocab == 0) throw Error("vocabulary size must be positive");
  if (epoch_length <= 0) throw Error("epoch length must be positive");
  if (mean_degree < 0.0) throw Error("mean degree must be non-negative");
  hyper.validate();
  for (const auto& row : seed_topics) {
    if (row.size() != vocab) throw Error("seed topic row length differs from the vocabulary size");
    double total = 0.0;
    for (double x : row) {
      if (!(x >= 0.0)) throw Error("seed topic rows must be non-negative");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error("seed topic rows must sum to 1");
  }
}

std::vector<std::vector<double>> disjoint_block_topics(std::size_t topics, std::size_t vocab) {
  if (topics == 0 || vocab < topics) throw Error("need at least one word per topic block");
  std::vector<std::vector<double>> rows(topics, std::vector<double>(vocab, 0.0));
  for (std::size_t k = 0; k < topics; ++k) {
    const std::size_t lo = k * vocab / topics, hi = (k + 1) * vocab / topics;
    for (std::size_t v = lo; v < hi; ++v) rows[k][v] = 1.0 / static_cast<double>(hi - lo);
  }
  return rows;
}

Generated generate(const GenConfig& config, Rng& rng) {
  config.validate();
  const auto graph = config.graph ? config.graph : random_graph(config, rng);
  const Hyperparams& hyper = config.hyper;
  const std::size_t V = config.vocab;
  const std::size_t U = graph->user_count();
  ModelState state(hyper, graph, V);

  GroundTruth truth;
  for (std::size_t v = 0; v < V; ++v) truth.words.push_back("w" + std::to_string(v));
  for (const auto& u : graph->users()) truth.users.push_back(u.label);

  const bool seeded = !config.seed_topics.empty();
  std::map<TopicId, std::vector<double>> phi;
  for (const auto& row : config.seed_topics) {
    const TopicId id = state.spawn_topic();
    state.topics().pin(id);
    phi.emplace(id, row);
  }

  std::vector<std::array<double, kRelationshipCount>> pi(U);
  for (std::size_t u = 0; u < U; ++u) pi[u] = draw_personality(hyper, {}, rng);

  std::vector<Post> posts;
  posts.reserve(config.epochs * config.posts_per_epoch);
  const auto members = hyper.factors.members();

  for (std::size_t t = 0; t < config.epochs; ++t) {
    if (t > 0) {
      state.advance_epoch();
      for (auto it = phi.begin(); it != phi.end();)
        it = state.ledger().contains(it->first) ? std::next(it) : phi.erase(it);
      if (hyper.dynamic) {
        const auto& caches = state.caches();
        for (std::size_t u = 0; u < U; ++u) pi[u] = draw_personality(hyper, caches.user_factor[u], rng);
        if (!seeded)
          for (auto& [id, row] : phi) {
            const auto* d = caches.find(id);
            row = draw_topic(hyper.beta, d ? &d->by_word : nullptr, V, rng);
          }
      }
    }
    truth.personality.push_back(pi);

    for (std::size_t i = 0; i < config.posts_per_epoch; ++i) {
      Post post;
      post.id = static_cast<PostId>(posts.size());
      post.user = static_cast<UserId>(rng() % U);
      post.epoch = static_cast<EpochIndex>(t);
      post.timestamp = static_cast<std::int64_t>(t) * config.epoch_length +
                       static_cast<std::int64_t>(i) * config.epoch_length /
                           static_cast<std::int64_t>(config.posts_per_epoch);

      std::vector<double> fw;
      for (auto f : members) fw.push_back(pi[post.user][index_of(f)]);
      const Relationship f = members[sample_categorical(fw, rng)];

      auto weights = neighbor_masses(state, post.user, f);
      TopicId z;
      if (seeded) {
        const double share = hyper.alpha_new / static_cast<double>(weights.size());
        for (double& w : weights) w += share;
        z = state.live_topics()[sample_categorical(weights, rng)];
      } else {
        weights.push_back(hyper.alpha_new);
        const std::size_t pick = sample_categorical(weights, rng);
        if (pick + 1 == weights.size()) {
          z = state.spawn_topic();
          phi.emplace(z, draw_topic(hyper.beta, nullptr, V, rng));
        } else {
          z = state.live_topics()[pick];
        }
      }

      const std::size_t n = config.min_tokens + rng() % (config.max_tokens - config.min_tokens + 1);
      const auto& row = phi.at(z);
      for (std::size_t l = 0; l < n; ++l) post.tokens.push_back(static_cast<VocabId>(sample_categorical(row, rng)));
      post.gold = static_cast<std::int64_t>(z);

      state.apply(post, z, f);
      truth.assignments.push_back(Assignment{post.id, z, f});
      posts.push_back(std::move(post));
    }
    truth.topics.push_back(phi);
  }

  std::stringstream text;
  for (const auto& p : posts) {
    text << p.id << '\t' << graph->user(p.user).label << '\t' << p.timestamp << '\t';
    for (std::size_t l = 0; l < p.tokens.size(); ++l) text << (l ? " " : "") << truth.words[p.tokens[l]];
    text << '\t' << *p.gold << '\n';
  }
  IngestConfig ingest;
  ingest.epoch_length = config.epoch_length;
  ingest.origin = 0;
  Corpus corpus = ingest_posts(text, graph, ingest);
  if (corpus.size() != truth.assignments.size()) throw InvariantError("generated corpus lost posts on ingestion");
  return Generated{std::move(corpus), std::move(truth)};
}

nlohmann::json GroundTruth::to_json() const {
  using nlohmann::json;
  json pers = json::array();
  for (const auto& epoch : personality) {
    json rows = json::object();
    for (std::size_t u = 0; u < epoch.size(); ++u) rows[users[u]] = epoch[u];
    pers.push_back(rows);
  }
  json tops = json::array();
  for (const auto& epoch : topics) {
    json rows = json::object();
    for (const auto& [id, row] : epoch) rows[std::to_string(id)] = row;
    tops.push_back(rows);
  }
  json labels = json::array();
  for (const auto& a : assignments)
    labels.push_back({{"post", a.post_id}, {"z", a.topic}, {"f", std::string(to_string(a.factor))}});
  return {{"factor_order", {"world", "self", "network", "geography"}},
          {"words", words},
          {"users", users},
          {"personality", pers},
          {"topics", tops},
          {"assignments", labels}};
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
  GroundTruth g;
  try {
    g.words = j.at("words").get<std::vector<std::string>>();
    g.users = j.at("users").get<std::vector<std::string>>();
    for (const auto& epoch : j.at("personality")) {
      std::vector<std::array<double, kRelationshipCount>> rows;
      for (const auto& u : g.users) rows.push_back(epoch.at(u).get<std::array<double, kRelationshipCount>>());
      g.personality.push_back(std::move(rows));
    }
    for (const auto& epoch : j.at("topics")) {
      std::map<TopicId, std::vector<double>> rows;
      for (const auto& [key, row] : epoch.items())
        rows.emplace(std::stoull(key), row.get<std::vector<double>>());
      g.topics.push_back(std::move(rows));
    }
    for (const auto& a : j.at("assignments"))
      g.assignments.push_back(Assignment{a.at("post").get<PostId>(), a.at("z").get<TopicId>(),
                                         require_relationship(a.at("f").get<std::string>())});
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed ground truth: ") + e.what());
  }
  return g;
}

}  // namespace relcrp
