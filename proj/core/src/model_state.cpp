#include "relcrp/model_state.hpp"

#include <algorithm>

namespace relcrp {

ModelState::ModelState(Hyperparams hyper, std::shared_ptr<const UserGraph> graph, std::size_t vocab_size)
    : hyper_(hyper),
      graph_(std::move(graph)),
      ledger_(LedgerShape{graph_ ? graph_->user_count() : 0, graph_ ? graph_->region_count() : 0, vocab_size}),
      ring_(hyper.dynamic ? hyper.delta_max : 0) {
  if (!graph_) throw Error("model state requires a user graph");
  if (vocab_size == 0) throw Error("model state requires a non-empty vocabulary");
  hyper_.validate();
  auto caches = std::make_shared<DecayedCaches>();
  caches->user_factor.assign(graph_->user_count(), {});
  caches_ = std::move(caches);
  baseline_.user_factor.assign(graph_->user_count(), {});
}

TopicId ModelState::spawn_topic() {
  TopicId id = topics_.allocate();
  ledger_.add_topic(id);
  return id;
}

void ModelState::add_topic(TopicId id) { ledger_.add_topic(id); }

void ModelState::apply(const Post& post, TopicId z, Relationship f) { ledger_.apply(post, z, f, *graph_); }

void ModelState::remove(const Post& post, TopicId z, Relationship f) { ledger_.remove(post, z, f, *graph_); }

void ModelState::fold(const CountLedger& delta, const std::function<TopicId(TopicId)>& remap) {
  ledger_.accumulate(delta, remap);
}

EpochSummary ModelState::summarize() const {
  EpochSummary s;
  s.epoch = epoch_;
  const auto ids = ledger_.topic_ids();
  for (std::size_t slot = 0; slot < ids.size(); ++slot) {
    const auto& row = ledger_.row(slot);
    if (row.posts == 0) continue;
    s.topic_user.emplace(ids[slot], row.by_user);
    s.topic_factor.emplace(ids[slot], row.by_factor);
  }
  auto uf = ledger_.user_factors();
  s.user_factor.assign(uf.begin(), uf.end());
  return s;
}

EpochSummary ModelState::current_summary() const {
  EpochSummary s = summarize();
  if (hyper_.dynamic) return s;
  // Static mode keeps cumulative counts; subtract what earlier epochs contributed.
  for (auto it = s.topic_user.begin(); it != s.topic_user.end();) {
    auto base = baseline_.topic_user.find(it->first);
    if (base != baseline_.topic_user.end())
      for (std::size_t u = 0; u < it->second.size(); ++u) it->second[u] -= base->second[u];
    bool zero = std::all_of(it->second.begin(), it->second.end(), [](auto c) { return c == 0; });
    it = zero ? s.topic_user.erase(it) : std::next(it);
  }
  for (auto it = s.topic_factor.begin(); it != s.topic_factor.end();) {
    auto base = baseline_.topic_factor.find(it->first);
    if (base != baseline_.topic_factor.end())
      for (std::size_t f = 0; f < kRelationshipCount; ++f) it->second[f] -= base->second[f];
    bool zero = std::all_of(it->second.begin(), it->second.end(), [](auto c) { return c == 0; });
    it = zero ? s.topic_factor.erase(it) : std::next(it);
  }
  for (std::size_t u = 0; u < s.user_factor.size(); ++u)
    for (std::size_t f = 0; f < kRelationshipCount; ++f) s.user_factor[u][f] -= baseline_.user_factor[u][f];
  return s;
}

void ModelState::advance_epoch() {
  archive_.push_back(current_summary());

  auto retire_unless = [&](const std::function<bool(TopicId, const TopicCounts&)>& keep) {
    ledger_.retain([&](TopicId id, const TopicCounts& row) {
      if (keep(id, row) || topics_.is_pinned(id)) return true;
      topics_.retire(id);
      return false;
    });
  };

  if (hyper_.dynamic) {
    EpochCounts snapshot;
    const auto ids = ledger_.topic_ids();
    for (std::size_t slot = 0; slot < ids.size(); ++slot)
      if (!ledger_.row(slot).is_zero()) snapshot.topics.emplace(ids[slot], ledger_.row(slot));
    auto uf = ledger_.user_factors();
    snapshot.user_factor.assign(uf.begin(), uf.end());
    ring_.push(std::move(snapshot));
    caches_ = std::make_shared<const DecayedCaches>(
        DecayedCaches::compute(ring_, ledger_.shape(), hyper_.lambda, hyper_.delta_max));
    ledger_.clear_counts();
    retire_unless([&](TopicId id, const TopicCounts&) { return ring_.references(id); });
  } else {
    retire_unless([](TopicId, const TopicCounts& row) { return row.posts > 0; });
    baseline_ = summarize();
  }
  ++epoch_;
}

void ModelState::advance_to(EpochIndex epoch) {
  if (epoch < epoch_) throw Error("cannot move the model back to an earlier epoch");
  while (epoch_ < epoch) advance_epoch();
}

std::array<double, kRelationshipCount> ModelState::personality(UserId u) const {
  std::array<double, kRelationshipCount> p{};
  double total = 0.0;
  const auto& m = ledger_.user_factor(u);
  for (auto f : hyper_.factors.members()) {
    const auto i = index_of(f);
    double w = static_cast<double>(m[i]) + hyper_.alpha[i];
    if (hyper_.dynamic) w += caches_->user_factor[u][i];
    p[i] = w;
    total += w;
  }
  for (double& x : p) x /= total;
  return p;
}

std::vector<double> ModelState::topic_word(TopicId k) const {
  const std::size_t V = vocab_size();
  std::vector<double> phi(V, 1.0 / static_cast<double>(V));
  const auto* row = ledger_.find(k);
  const auto* decayed = hyper_.dynamic ? caches_->find(k) : nullptr;
  if (!row && !decayed) return phi;
  double denom = static_cast<double>(V) * hyper_.beta;
  if (row) denom += static_cast<double>(row->words);
  if (decayed) denom += decayed->words;
  for (std::size_t v = 0; v < V; ++v) {
    double num = hyper_.beta;
    if (row) num += row->by_word[v];
    if (decayed) num += decayed->by_word[v];
    phi[v] = num / denom;
  }
  return phi;
}

std::size_t ModelState::footprint() const {
  const auto& s = ledger_.shape();
  const std::size_t row_cells = 2 * s.users + s.regions + s.vocab + 2 + kRelationshipCount;
  std::size_t cells = ledger_.topic_count() * row_cells + s.users * kRelationshipCount;
  for (std::size_t d = 1; d <= ring_.size(); ++d)
    cells += ring_.at(d).topics.size() * row_cells + ring_.at(d).user_factor.size() * kRelationshipCount;
  cells += caches_->topics.size() * row_cells + caches_->user_factor.size() * kRelationshipCount;
  return cells;
}

ModelState ModelState::sampling_copy() const {
  ModelState copy;
  copy.hyper_ = hyper_;
  copy.graph_ = graph_;
  copy.ledger_ = ledger_;
  copy.caches_ = caches_;
  copy.topics_ = topics_;
  copy.epoch_ = epoch_;
  return copy;
}

}  // namespace relcrp
