#include "relcrp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

namespace relcrp {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double count_mass(const TopicCounts& row, UserId u, RegionId r, const UserGraph&, Relationship f) {
  switch (f) {
    case Relationship::World:
      return static_cast<double>(row.posts);
    case Relationship::SelfPref:
      return row.by_user[u];
    case Relationship::Network:
      return row.network[u];
    case Relationship::Geography:
      return static_cast<double>(row.by_region[r] - row.by_user[u]);
  }
  return 0.0;
}

double decayed_mass(const DecayedTopic& d, UserId u, RegionId r, Relationship f) {
  switch (f) {
    case Relationship::World:
      return d.posts;
    case Relationship::SelfPref:
      return d.by_user[u];
    case Relationship::Network:
      return d.network[u];
    case Relationship::Geography:
      return std::max(0.0, d.by_region[r] - d.by_user[u]);
  }
  return 0.0;
}

}  // namespace

std::vector<double> TopicScores::probabilities() const {
  std::vector<double> p = log_weights;
  normalize_log_weights(p);
  return p;
}

double neighbor_mass(const ModelState& state, std::size_t slot, UserId u, Relationship f) {
  const auto& graph = state.graph();
  const RegionId r = graph.region_of(u);
  double mass = count_mass(state.ledger().row(slot), u, r, graph, f);
  if (state.hyper().dynamic) {
    if (const auto* d = state.caches().find(state.live_topics()[slot])) mass += decayed_mass(*d, u, r, f);
  }
  return mass;
}

std::vector<double> neighbor_masses(const ModelState& state, UserId u, Relationship f) {
  std::vector<double> out(state.live_topics().size());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = neighbor_mass(state, s, u, f);
  return out;
}

FactorScores personality_prior(const Post& post, const ModelState& state) {
  FactorScores scores;
  const auto& hyper = state.hyper();
  const auto& m = state.ledger().user_factor(post.user);
  for (auto f : hyper.factors.members()) {
    const auto i = index_of(f);
    double w = static_cast<double>(m[i]) + hyper.alpha[i];
    if (hyper.dynamic) w += state.caches().user_factor[post.user][i];
    scores.factors.push_back(f);
    scores.weights.push_back(w);
  }
  return scores;
}

FactorScores score_factor(const Post& post, TopicId z_current, const ModelState& state) {
  FactorScores scores = personality_prior(post, state);
  const auto slot = state.ledger().slot_of(z_current);
  const double alpha_new = state.hyper().alpha_new;
  std::vector<std::vector<double>> masses;
  bool supported = false;
  for (Relationship f : scores.factors) {
    masses.push_back(neighbor_masses(state, post.user, f));
    supported = supported || (slot && masses.back()[*slot] > 0.0);
  }
  // A topic no enabled relationship can reach is a fresh table for every factor.
  bool positive = false;
  for (std::size_t i = 0; i < scores.factors.size(); ++i) {
    double total = alpha_new;
    for (double m : masses[i]) total += m;
    const double mass = supported ? masses[i][*slot] : alpha_new;
    scores.weights[i] *= mass / total;
    positive = positive || scores.weights[i] > 0.0;
  }
  if (!positive) throw InvariantError("factor scores are all zero");
  return scores;
}

TopicScores score_topic(const Post& post, Relationship f, const ModelState& state) {
  if (post.tokens.empty()) throw Error("cannot score a post with no tokens");
  const auto& hyper = state.hyper();
  if (!hyper.factors.contains(f))
    throw Error("relationship '" + std::string(to_string(f)) + "' is not enabled");
  const std::size_t V = state.vocab_size();
  for (VocabId v : post.tokens)
    if (v >= V) throw Error("post " + std::to_string(post.id) + " has a token outside the vocabulary");

  const auto ids = state.live_topics();
  TopicScores scores;
  scores.topics.assign(ids.begin(), ids.end());
  scores.log_weights.resize(ids.size() + 1);
  const double n_tokens = static_cast<double>(post.tokens.size());
  const double v_beta = static_cast<double>(V) * hyper.beta;

  for (std::size_t s = 0; s < ids.size(); ++s) {
    const double mass = neighbor_mass(state, s, post.user, f);
    if (!(mass > 0.0)) {
      scores.log_weights[s] = kNegInf;
      continue;
    }
    const auto& row = state.ledger().row(s);
    const DecayedTopic* d = hyper.dynamic ? state.caches().find(ids[s]) : nullptr;
    double denom = static_cast<double>(row.words) + v_beta;
    if (d) denom += d->words;
    double lw = std::log(mass) - n_tokens * std::log(denom);
    for (VocabId v : post.tokens) {
      double num = row.by_word[v] + hyper.beta;
      if (d) num += d->by_word[v];
      lw += std::log(num);
    }
    scores.log_weights[s] = lw;
  }
  scores.log_weights.back() = std::log(hyper.alpha_new) - n_tokens * std::log(static_cast<double>(V));
  return scores;
}

TopicId spawn_topic(ModelState& state) { return state.spawn_topic(); }

Assignment sample_assignment(const Post& post, ModelState& state, Rng& rng,
                             std::optional<TopicId> previous_topic) {
  const FactorScores fs =
      previous_topic ? score_factor(post, *previous_topic, state) : personality_prior(post, state);
  const Relationship f = fs.factors[sample_categorical(fs.weights, rng)];

  const TopicScores ts = score_topic(post, f, state);
  const std::size_t pick = sample_log_categorical(ts.log_weights, rng);
  const TopicId z = pick == ts.topics.size() ? state.spawn_topic() : ts.topics[pick];
  state.apply(post, z, f);
  return Assignment{post.id, z, f};
}

double sequence_log_joint(std::span<const Post> posts, std::span<const std::int64_t> clusters,
                          std::span<const Relationship> factors, const Hyperparams& hyper,
                          std::shared_ptr<const UserGraph> graph, std::size_t vocab_size) {
  if (posts.size() != clusters.size() || posts.size() != factors.size())
    throw Error("sequence_log_joint: posts, clusters and factors differ in length");
  Hyperparams h = hyper;
  h.dynamic = false;
  ModelState state(h, std::move(graph), vocab_size);
  std::map<std::int64_t, TopicId> topic_of;
  const double V = static_cast<double>(vocab_size);
  double total = 0.0;

  for (std::size_t i = 0; i < posts.size(); ++i) {
    const Post& post = posts[i];
    const Relationship f = factors[i];
    if (!h.factors.contains(f)) return kNegInf;

    const auto prior = personality_prior(post, state);
    double prior_total = 0.0, prior_f = 0.0;
    for (std::size_t j = 0; j < prior.factors.size(); ++j) {
      prior_total += prior.weights[j];
      if (prior.factors[j] == f) prior_f = prior.weights[j];
    }
    total += std::log(prior_f / prior_total);

    double neighbor_total = 0.0;
    for (std::size_t s = 0; s < state.live_topics().size(); ++s)
      neighbor_total += neighbor_mass(state, s, post.user, f);
    const double crp_norm = neighbor_total + h.alpha_new;

    auto it = topic_of.find(clusters[i]);
    TopicId z;
    if (it == topic_of.end()) {
      total += std::log(h.alpha_new / crp_norm);
      z = state.spawn_topic();
      topic_of.emplace(clusters[i], z);
    } else {
      z = it->second;
      const double c = neighbor_mass(state, *state.ledger().slot_of(z), post.user, f);
      if (!(c > 0.0)) return kNegInf;
      total += std::log(c / crp_norm);
    }

    const auto& row = *state.ledger().find(z);
    std::unordered_map<VocabId, std::int64_t> seen;
    std::int64_t seen_total = 0;
    for (VocabId v : post.tokens) {
      const double num = row.by_word[v] + seen[v] + h.beta;
      const double den = static_cast<double>(row.words + seen_total) + V * h.beta;
      total += std::log(num / den);
      ++seen[v];
      ++seen_total;
    }
    state.apply(post, z, f);
  }
  return total;
}

}  // namespace relcrp
