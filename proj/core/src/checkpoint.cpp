#include "relcrp/checkpoint.hpp"

#include <fstream>

#include "relcrp/random.hpp"

namespace relcrp {

using nlohmann::json;

struct CheckpointAccess {
  // Vectors are mostly zero; store [index, value] pairs.
  template <typename T>
  static json sparse(const std::vector<T>& v) {
    json out = json::array();
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] != T{}) out.push_back(json::array({i, v[i]}));
    return out;
  }

  template <typename T>
  static std::vector<T> dense(const json& j, std::size_t size) {
    std::vector<T> out(size);
    for (const auto& e : j) {
      const auto i = e.at(0).get<std::size_t>();
      if (i >= size) throw Error("checkpoint entry index out of range");
      out[i] = e.at(1).get<T>();
    }
    return out;
  }

  static json row_to_json(const TopicCounts& row) {
    return {{"posts", row.posts},
            {"words", row.words},
            {"by_user", sparse(row.by_user)},
            {"network", sparse(row.network)},
            {"by_region", sparse(row.by_region)},
            {"by_word", sparse(row.by_word)},
            {"by_factor", row.by_factor}};
  }

  static TopicCounts row_from_json(const json& j, const LedgerShape& shape) {
    TopicCounts row;
    row.posts = j.at("posts").get<std::int64_t>();
    row.words = j.at("words").get<std::int64_t>();
    row.by_user = dense<std::int32_t>(j.at("by_user"), shape.users);
    row.network = dense<std::int32_t>(j.at("network"), shape.users);
    row.by_region = dense<std::int32_t>(j.at("by_region"), shape.regions);
    row.by_word = dense<std::int32_t>(j.at("by_word"), shape.vocab);
    row.by_factor = j.at("by_factor").get<FactorCounts>();
    return row;
  }

  static json ledger_to_json(const CountLedger& ledger) {
    json rows = json::array();
    for (std::size_t s = 0; s < ledger.rows_.size(); ++s)
      rows.push_back({{"id", ledger.ids_[s]}, {"counts", row_to_json(ledger.rows_[s])}});
    return {{"rows", rows}, {"user_factor", ledger.user_factor_}};
  }

  static CountLedger ledger_from_json(const json& j, const LedgerShape& shape) {
    CountLedger ledger(shape);
    for (const auto& r : j.at("rows")) {
      const std::size_t slot = ledger.add_topic(r.at("id").get<TopicId>());
      ledger.rows_[slot] = row_from_json(r.at("counts"), shape);
    }
    ledger.user_factor_ = j.at("user_factor").get<std::vector<FactorCounts>>();
    if (ledger.user_factor_.size() != shape.users) throw Error("checkpoint user table has the wrong size");
    return ledger;
  }

  static json ring_to_json(const HistoryRing& ring) {
    json epochs = json::array();
    for (const auto& e : ring.epochs_) {
      json topics = json::array();
      for (const auto& [id, row] : e.topics) topics.push_back({{"id", id}, {"counts", row_to_json(row)}});
      epochs.push_back({{"topics", topics}, {"user_factor", e.user_factor}});
    }
    return {{"capacity", ring.capacity_}, {"epochs", epochs}};
  }

  static HistoryRing ring_from_json(const json& j, const LedgerShape& shape) {
    HistoryRing ring(j.at("capacity").get<std::size_t>());
    for (const auto& e : j.at("epochs")) {
      EpochCounts counts;
      for (const auto& t : e.at("topics"))
        counts.topics.emplace(t.at("id").get<TopicId>(), row_from_json(t.at("counts"), shape));
      counts.user_factor = e.at("user_factor").get<std::vector<FactorCounts>>();
      ring.epochs_.push_back(std::move(counts));
    }
    return ring;
  }

  static json summary_to_json(const EpochSummary& s) {
    json topic_user = json::array();
    for (const auto& [id, counts] : s.topic_user) topic_user.push_back({{"id", id}, {"counts", sparse(counts)}});
    json topic_factor = json::array();
    for (const auto& [id, counts] : s.topic_factor) topic_factor.push_back({{"id", id}, {"counts", counts}});
    return {{"epoch", s.epoch},
            {"topic_user", topic_user},
            {"topic_factor", topic_factor},
            {"user_factor", s.user_factor}};
  }

  static EpochSummary summary_from_json(const json& j, std::size_t users) {
    EpochSummary s;
    s.epoch = j.at("epoch").get<EpochIndex>();
    for (const auto& t : j.at("topic_user"))
      s.topic_user.emplace(t.at("id").get<TopicId>(), dense<std::int32_t>(t.at("counts"), users));
    for (const auto& t : j.at("topic_factor"))
      s.topic_factor.emplace(t.at("id").get<TopicId>(), t.at("counts").get<FactorCounts>());
    s.user_factor = j.at("user_factor").get<std::vector<FactorCounts>>();
    return s;
  }

  static json state_to_json(const ModelState& state) {
    const auto& shape = state.ledger_.shape();
    json archive = json::array();
    for (const auto& s : state.archive_) archive.push_back(summary_to_json(s));
    return {{"hyper", hyperparams_to_json(state.hyper_)},
            {"shape", {{"users", shape.users}, {"regions", shape.regions}, {"vocab", shape.vocab}}},
            {"epoch", state.epoch_},
            {"topics",
             {{"next", state.topics_.next_id()},
              {"retired", std::vector<TopicId>(state.topics_.retired().begin(), state.topics_.retired().end())},
              {"pinned", std::vector<TopicId>(state.topics_.pinned().begin(), state.topics_.pinned().end())}}},
            {"ledger", ledger_to_json(state.ledger_)},
            {"ring", ring_to_json(state.ring_)},
            {"archive", archive},
            {"baseline", summary_to_json(state.baseline_)}};
  }

  static ModelState state_from_json(const json& j, std::shared_ptr<const UserGraph> graph) {
    const auto& js = j.at("shape");
    const LedgerShape shape{js.at("users").get<std::size_t>(), js.at("regions").get<std::size_t>(),
                            js.at("vocab").get<std::size_t>()};
    if (!graph || graph->user_count() != shape.users || graph->region_count() != shape.regions)
      throw Error("checkpoint does not match the user graph");
    ModelState state(hyperparams_from_json(j.at("hyper")), std::move(graph), shape.vocab);
    state.epoch_ = j.at("epoch").get<EpochIndex>();
    const auto& topics = j.at("topics");
    state.topics_.restore(topics.at("next").get<TopicId>(), topics.at("retired").get<std::vector<TopicId>>(),
                          topics.at("pinned").get<std::vector<TopicId>>());
    state.ledger_ = ledger_from_json(j.at("ledger"), shape);
    state.ring_ = ring_from_json(j.at("ring"), shape);
    for (const auto& s : j.at("archive")) state.archive_.push_back(summary_from_json(s, shape.users));
    state.baseline_ = summary_from_json(j.at("baseline"), shape.users);
    if (state.hyper_.dynamic)
      state.caches_ = std::make_shared<const DecayedCaches>(
          DecayedCaches::compute(state.ring_, shape, state.hyper_.lambda, state.hyper_.delta_max));
    return state;
  }
};

json hyperparams_to_json(const Hyperparams& hyper) {
  return {{"alpha_w", hyper.alpha[index_of(Relationship::World)]},
          {"alpha_u", hyper.alpha[index_of(Relationship::SelfPref)]},
          {"alpha_n", hyper.alpha[index_of(Relationship::Network)]},
          {"alpha_g", hyper.alpha[index_of(Relationship::Geography)]},
          {"alpha_new", hyper.alpha_new},
          {"beta", hyper.beta},
          {"lambda", hyper.lambda},
          {"delta", hyper.delta_max},
          {"factors", hyper.factors.to_string()},
          {"dynamic", hyper.dynamic}};
}

Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams h;
  h.alpha[index_of(Relationship::World)] = j.value("alpha_w", h.alpha[0]);
  h.alpha[index_of(Relationship::SelfPref)] = j.value("alpha_u", h.alpha[1]);
  h.alpha[index_of(Relationship::Network)] = j.value("alpha_n", h.alpha[2]);
  h.alpha[index_of(Relationship::Geography)] = j.value("alpha_g", h.alpha[3]);
  h.alpha_new = j.value("alpha_new", h.alpha_new);
  h.beta = j.value("beta", h.beta);
  h.lambda = j.value("lambda", h.lambda);
  h.delta_max = j.value("delta", h.delta_max);
  if (j.contains("factors")) h.factors = FactorSet::parse(j.at("factors").get<std::string>());
  h.dynamic = j.value("dynamic", h.dynamic);
  h.validate();
  return h;
}

json model_state_to_json(const ModelState& state) { return CheckpointAccess::state_to_json(state); }

ModelState model_state_from_json(const json& j, std::shared_ptr<const UserGraph> graph) {
  try {
    return CheckpointAccess::state_from_json(j, std::move(graph));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model state: ") + e.what());
  }
}

json checkpoint_to_json(const Checkpoint& c) {
  json assignments = json::array();
  for (const auto& a : c.assignments)
    assignments.push_back(json::array({a.post_id, a.topic, std::string(to_string(a.factor))}));
  return {{"version", Checkpoint::kVersion},
          {"state", model_state_to_json(c.state)},
          {"rng", c.rng_state},
          {"next_batch", c.next_batch},
          {"batch_size", c.batch_size},
          {"sweeps", c.sweeps},
          {"seed", c.seed},
          {"assignments", assignments}};
}

Checkpoint checkpoint_from_json(const json& j, std::shared_ptr<const UserGraph> graph) {
  try {
    const int version = j.at("version").get<int>();
    if (version != Checkpoint::kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.state = model_state_from_json(j.at("state"), std::move(graph));
    c.rng_state = j.at("rng").get<std::string>();
    c.next_batch = j.at("next_batch").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.sweeps = j.at("sweeps").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& a : j.at("assignments"))
      c.assignments.push_back(Assignment{a.at(0).get<PostId>(), a.at(1).get<TopicId>(),
                                         require_relationship(a.at(2).get<std::string>())});
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint " + tmp);
    out << checkpoint_to_json(checkpoint).dump();
    if (!out) throw Error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const UserGraph> graph) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j, std::move(graph));
}

}  // namespace relcrp
