#include "relcrp/stats.hpp"

#include <algorithm>
#include <string>

namespace relcrp {

void Hyperparams::validate() const {
  for (auto r : kAllRelationships)
    if (!(alpha[index_of(r)] > 0.0))
      throw Error("alpha_" + std::string(to_string(r)) + " must be positive");
  if (!(alpha_new > 0.0)) throw Error("alpha_new must be positive");
  if (!(beta > 0.0)) throw Error("beta must be positive");
  if (!(lambda > 0.0)) throw Error("lambda must be positive");
  if (factors.empty()) throw Error("at least one relationship must be enabled");
}

double decay_weight(std::size_t delta, double lambda) {
  if (delta < 1) throw Error("decay delta must be >= 1");
  if (!(lambda > 0.0)) throw Error("decay lambda must be positive");
  return std::exp(-static_cast<double>(delta) / lambda);
}

double decayed_sum(std::span<const double> history, double lambda, std::size_t delta_max) {
  double acc = 0.0;
  const std::size_t n = std::min(history.size(), delta_max);
  for (std::size_t d = 1; d <= n; ++d) acc += decay_weight(d, lambda) * history[d - 1];
  return acc;
}

// ------------------------------------------------------------- TopicCounts

TopicCounts::TopicCounts(const LedgerShape& shape)
    : by_user(shape.users, 0),
      network(shape.users, 0),
      by_region(shape.regions, 0),
      by_word(shape.vocab, 0) {}

bool TopicCounts::is_zero() const {
  auto zero = [](const auto& v) { return std::all_of(v.begin(), v.end(), [](auto x) { return x == 0; }); };
  return posts == 0 && words == 0 && zero(by_user) && zero(network) && zero(by_region) && zero(by_word) &&
         zero(by_factor);
}

// ------------------------------------------------------------- CountLedger

CountLedger::CountLedger(LedgerShape shape) : shape_(shape), user_factor_(shape.users, FactorCounts{}) {}

std::optional<std::size_t> CountLedger::slot_of(TopicId id) const {
  auto it = slot_.find(id);
  if (it == slot_.end()) return std::nullopt;
  return it->second;
}

const TopicCounts* CountLedger::find(TopicId id) const {
  auto it = slot_.find(id);
  return it == slot_.end() ? nullptr : &rows_[it->second];
}

std::size_t CountLedger::add_topic(TopicId id) {
  if (slot_.contains(id)) throw InvariantError("topic " + std::to_string(id) + " already has a ledger row");
  std::size_t slot = rows_.size();
  ids_.push_back(id);
  rows_.emplace_back(shape_);
  slot_.emplace(id, slot);
  return slot;
}

std::size_t CountLedger::ensure_topic(TopicId id) {
  if (auto s = slot_of(id)) return *s;
  return add_topic(id);
}

void CountLedger::retain(const std::function<bool(TopicId, const TopicCounts&)>& keep) {
  std::vector<TopicId> ids;
  std::vector<TopicCounts> rows;
  for (std::size_t s = 0; s < rows_.size(); ++s) {
    if (!keep(ids_[s], rows_[s])) continue;
    ids.push_back(ids_[s]);
    rows.push_back(std::move(rows_[s]));
  }
  ids_ = std::move(ids);
  rows_ = std::move(rows);
  slot_.clear();
  for (std::size_t s = 0; s < ids_.size(); ++s) slot_.emplace(ids_[s], s);
}

template <int Sign>
void CountLedger::update(const Post& post, std::size_t slot, Relationship f, const UserGraph& graph) {
  auto& row = rows_[slot];
  const UserId u = post.user;
  const RegionId r = graph.region_of(u);
  auto bump = [&](auto& count, const char* what) {
    if constexpr (Sign < 0) {
      if (count <= 0)
        throw InvariantError(std::string("count '") + what + "' of topic " + std::to_string(ids_[slot]) +
                             " would become negative");
    }
    count += Sign;
  };
  bump(row.posts, "posts");
  bump(row.by_user[u], "user");
  bump(row.by_region[r], "region");
  bump(row.by_factor[index_of(f)], "topic-factor");
  bump(user_factor_[u][index_of(f)], "user-factor");
  for (UserId follower : graph.followers(u)) bump(row.network[follower], "network");
  for (VocabId v : post.tokens) {
    if (v >= shape_.vocab) throw InvariantError("token id outside the ledger vocabulary");
    bump(row.by_word[v], "word");
    bump(row.words, "topic-words");
  }
}

void CountLedger::apply(const Post& post, TopicId z, Relationship f, const UserGraph& graph) {
  auto slot = slot_of(z);
  if (!slot) throw InvariantError("apply: topic " + std::to_string(z) + " has no ledger row");
  update<+1>(post, *slot, f, graph);
}

void CountLedger::remove(const Post& post, TopicId z, Relationship f, const UserGraph& graph) {
  auto slot = slot_of(z);
  if (!slot) throw InvariantError("remove: topic " + std::to_string(z) + " has no ledger row");
  // Validate first so a failed removal leaves the ledger untouched.
  const auto& row = rows_[*slot];
  const UserId u = post.user;
  bool ok = row.posts > 0 && row.by_user[u] > 0 && row.by_region[graph.region_of(u)] > 0 &&
            row.by_factor[index_of(f)] > 0 && user_factor_[u][index_of(f)] > 0;
  for (UserId follower : graph.followers(u)) ok = ok && row.network[follower] > 0;
  if (ok) {
    std::unordered_map<VocabId, std::int32_t> need;
    for (VocabId v : post.tokens) ++need[v];
    for (auto [v, c] : need) ok = ok && v < shape_.vocab && row.by_word[v] >= c;
  }
  if (!ok)
    throw InvariantError("remove: post " + std::to_string(post.id) + " is not assigned to topic " +
                         std::to_string(z) + " with factor " + std::string(to_string(f)));
  update<-1>(post, *slot, f, graph);
}

void CountLedger::accumulate(const CountLedger& delta, const std::function<TopicId(TopicId)>& remap) {
  if (!(delta.shape_ == shape_)) throw InvariantError("accumulate: ledger shapes differ");
  for (std::size_t s = 0; s < delta.rows_.size(); ++s) {
    const TopicId target = remap(delta.ids_[s]);
    auto slot = slot_of(target);
    if (!slot) throw InvariantError("accumulate: topic " + std::to_string(target) + " has no ledger row");
    auto& dst = rows_[*slot];
    const auto& src = delta.rows_[s];
    dst.posts += src.posts;
    dst.words += src.words;
    for (std::size_t i = 0; i < dst.by_user.size(); ++i) dst.by_user[i] += src.by_user[i];
    for (std::size_t i = 0; i < dst.network.size(); ++i) dst.network[i] += src.network[i];
    for (std::size_t i = 0; i < dst.by_region.size(); ++i) dst.by_region[i] += src.by_region[i];
    for (std::size_t i = 0; i < dst.by_word.size(); ++i) dst.by_word[i] += src.by_word[i];
    for (std::size_t i = 0; i < kRelationshipCount; ++i) dst.by_factor[i] += src.by_factor[i];
  }
  for (std::size_t u = 0; u < user_factor_.size(); ++u)
    for (std::size_t i = 0; i < kRelationshipCount; ++i) user_factor_[u][i] += delta.user_factor_[u][i];
}

void CountLedger::clear_counts() {
  for (auto& row : rows_) row = TopicCounts(shape_);
  std::fill(user_factor_.begin(), user_factor_.end(), FactorCounts{});
}

bool operator==(const CountLedger& a, const CountLedger& b) {
  if (!(a.shape_ == b.shape_) || a.rows_.size() != b.rows_.size() || a.user_factor_ != b.user_factor_)
    return false;
  for (std::size_t s = 0; s < a.rows_.size(); ++s) {
    const auto* other = b.find(a.ids_[s]);
    if (!other || !(*other == a.rows_[s])) return false;
  }
  return true;
}

void apply_assignment(const Post& post, TopicId z, Relationship f, CountLedger& ledger,
                      const UserGraph& graph) {
  ledger.apply(post, z, f, graph);
}

void remove_assignment(const Post& post, TopicId z, Relationship f, CountLedger& ledger,
                       const UserGraph& graph) {
  ledger.remove(post, z, f, graph);
}

// ------------------------------------------------------------- HistoryRing

void HistoryRing::push(EpochCounts snapshot) {
  if (capacity_ == 0) return;
  epochs_.push_front(std::move(snapshot));
  while (epochs_.size() > capacity_) epochs_.pop_back();
}

bool HistoryRing::references(TopicId id) const {
  return std::any_of(epochs_.begin(), epochs_.end(),
                     [id](const EpochCounts& e) { return e.topics.contains(id); });
}

// ----------------------------------------------------------- DecayedCaches

DecayedCaches DecayedCaches::compute(const HistoryRing& ring, const LedgerShape& shape, double lambda,
                                     std::size_t delta_max) {
  DecayedCaches caches;
  caches.user_factor.assign(shape.users, {});
  const std::size_t depth = std::min(ring.size(), delta_max);
  if (depth == 0) return caches;

  // Same accumulation order as decayed_sum, so cached values match it bit for bit.
  std::vector<double> weight(depth + 1, 0.0);
  for (std::size_t d = 1; d <= depth; ++d) weight[d] = decay_weight(d, lambda);

  std::vector<TopicId> ids;
  for (std::size_t d = 1; d <= depth; ++d)
    for (const auto& [id, _] : ring.at(d).topics) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  auto decay_vec = [&](std::vector<double>& out, std::size_t n, auto member) {
    out.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t d = 1; d <= depth; ++d) acc += weight[d] * member(d, i);
      out[i] = acc;
    }
  };

  for (TopicId id : ids) {
    std::vector<const TopicCounts*> hist(depth + 1, nullptr);
    for (std::size_t d = 1; d <= depth; ++d) {
      const auto& topics = ring.at(d).topics;
      auto it = topics.find(id);
      if (it != topics.end()) hist[d] = &it->second;
    }
    DecayedTopic t;
    double posts = 0.0, words = 0.0;
    for (std::size_t d = 1; d <= depth; ++d) {
      posts += weight[d] * static_cast<double>(hist[d] ? hist[d]->posts : 0);
      words += weight[d] * static_cast<double>(hist[d] ? hist[d]->words : 0);
    }
    t.posts = posts;
    t.words = words;
    decay_vec(t.by_user, shape.users,
              [&](std::size_t d, std::size_t i) { return hist[d] ? static_cast<double>(hist[d]->by_user[i]) : 0.0; });
    decay_vec(t.network, shape.users,
              [&](std::size_t d, std::size_t i) { return hist[d] ? static_cast<double>(hist[d]->network[i]) : 0.0; });
    decay_vec(t.by_region, shape.regions, [&](std::size_t d, std::size_t i) {
      return hist[d] ? static_cast<double>(hist[d]->by_region[i]) : 0.0;
    });
    decay_vec(t.by_word, shape.vocab,
              [&](std::size_t d, std::size_t i) { return hist[d] ? static_cast<double>(hist[d]->by_word[i]) : 0.0; });
    caches.topics.emplace(id, std::move(t));
  }

  for (std::size_t u = 0; u < shape.users; ++u) {
    for (std::size_t f = 0; f < kRelationshipCount; ++f) {
      double acc = 0.0;
      for (std::size_t d = 1; d <= depth; ++d) {
        const auto& uf = ring.at(d).user_factor;
        acc += weight[d] * static_cast<double>(u < uf.size() ? uf[u][f] : 0);
      }
      caches.user_factor[u][f] = acc;
    }
  }
  return caches;
}

bool TopicTable::is_pinned(TopicId id) const {
  return std::find(pinned_.begin(), pinned_.end(), id) != pinned_.end();
}

}  // namespace relcrp
