#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "relcrp/corpus.hpp"
#include "relcrp/types.hpp"

namespace relcrp {

struct CheckpointAccess;

struct Hyperparams {
  // Personality prior, indexed by Relationship (world, self, network, geography).
  std::array<double, kRelationshipCount> alpha{0.1, 0.1, 0.1, 0.1};
  // Mass of the new-topic slot.
  double alpha_new = 0.1;
  double beta = 0.1;
  // Decay e^{-delta/lambda} over the last delta_max epochs.
  double lambda = 1.0;
  std::size_t delta_max = 3;
  FactorSet factors = FactorSet::all();
  // false: no historical terms and no per-epoch rollover of the sampling counts.
  bool dynamic = true;

  double alpha_of(Relationship r) const { return alpha[index_of(r)]; }
  // Throws Error when a value is out of range.
  void validate() const;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

// e^{-delta/lambda}; delta >= 1.
double decay_weight(std::size_t delta, double lambda);

// sum_{delta=1}^{min(len, delta_max)} e^{-delta/lambda} * history[delta-1]
double decayed_sum(std::span<const double> history, double lambda, std::size_t delta_max);

struct LedgerShape {
  std::size_t users = 0;
  std::size_t regions = 0;
  std::size_t vocab = 0;

  friend bool operator==(const LedgerShape&, const LedgerShape&) = default;
};

// Integer tallies of one topic within one epoch.
struct TopicCounts {
  std::int64_t posts = 0;                  // n_{k,t}
  std::int64_t words = 0;                  // sum_v n_{k,v,t}
  std::vector<std::int32_t> by_user;       // n^{u}_{k,t}, also n_{k,u,t}
  std::vector<std::int32_t> network;       // sum over followees u' of u of n^{u'}_{k,t}
  std::vector<std::int32_t> by_region;
  std::vector<std::int32_t> by_word;       // n_{k,v,t}; its epoch-end value is m_{k,w,t}
  std::array<std::int64_t, kRelationshipCount> by_factor{};

  TopicCounts() = default;
  explicit TopicCounts(const LedgerShape& shape);
  bool is_zero() const;
  friend bool operator==(const TopicCounts&, const TopicCounts&) = default;
};

using FactorCounts = std::array<std::int64_t, kRelationshipCount>;

// Current-epoch sufficient statistics. Rows are kept in insertion (slot) order.
class CountLedger {
 public:
  CountLedger() = default;
  explicit CountLedger(LedgerShape shape);

  const LedgerShape& shape() const { return shape_; }
  std::size_t topic_count() const { return rows_.size(); }
  std::span<const TopicId> topic_ids() const { return ids_; }
  std::optional<std::size_t> slot_of(TopicId id) const;
  const TopicCounts& row(std::size_t slot) const { return rows_[slot]; }
  const TopicCounts* find(TopicId id) const;
  bool contains(TopicId id) const { return slot_.contains(id); }

  // Adds a zero row; throws InvariantError if the id is already present.
  std::size_t add_topic(TopicId id);
  std::size_t ensure_topic(TopicId id);
  // Drops rows for which keep(id, row) is false; remaining slots stay in order.
  void retain(const std::function<bool(TopicId, const TopicCounts&)>& keep);

  // m_{u,f,t}
  const FactorCounts& user_factor(UserId u) const { return user_factor_[u]; }
  std::span<const FactorCounts> user_factors() const { return user_factor_; }

  // Increments every count touched by a post with labels (z, f), including the
  // Network aggregate of each follower of the author. z must have a row.
  void apply(const Post& post, TopicId z, Relationship f, const UserGraph& graph);
  // Exact inverse of apply; InvariantError if a count would go negative.
  void remove(const Post& post, TopicId z, Relationship f, const UserGraph& graph);

  // Adds another ledger's counts, mapping its topic ids through remap. Target
  // rows must already exist.
  void accumulate(const CountLedger& delta, const std::function<TopicId(TopicId)>& remap);

  // Zeroes all counts, keeping rows.
  void clear_counts();

  // Order-insensitive comparison keyed by topic id.
  friend bool operator==(const CountLedger& a, const CountLedger& b);

 private:
  friend struct CheckpointAccess;

  template <int Sign>
  void update(const Post& post, std::size_t slot, Relationship f, const UserGraph& graph);

  LedgerShape shape_;
  std::vector<TopicId> ids_;
  std::vector<TopicCounts> rows_;
  std::unordered_map<TopicId, std::size_t> slot_;
  std::vector<FactorCounts> user_factor_;
};

void apply_assignment(const Post& post, TopicId z, Relationship f, CountLedger& ledger,
                      const UserGraph& graph);
void remove_assignment(const Post& post, TopicId z, Relationship f, CountLedger& ledger,
                       const UserGraph& graph);

// Epoch-end snapshot of the sampling counts.
struct EpochCounts {
  std::map<TopicId, TopicCounts> topics;
  std::vector<FactorCounts> user_factor;

  friend bool operator==(const EpochCounts&, const EpochCounts&) = default;
};

// The last delta_max epoch-end snapshots, most recent first (delta = 1).
class HistoryRing {
 public:
  HistoryRing() = default;
  explicit HistoryRing(std::size_t capacity) : capacity_(capacity) {}

  void push(EpochCounts snapshot);
  std::size_t size() const { return epochs_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return epochs_.empty(); }
  // delta in [1, size()].
  const EpochCounts& at(std::size_t delta) const { return epochs_.at(delta - 1); }
  bool references(TopicId id) const;

  friend bool operator==(const HistoryRing&, const HistoryRing&) = default;

 private:
  friend struct CheckpointAccess;

  std::size_t capacity_ = 0;
  std::deque<EpochCounts> epochs_;
};

// Decayed history of one topic: n-bar terms for each scope plus beta-bar.
struct DecayedTopic {
  double posts = 0.0;
  double words = 0.0;
  std::vector<double> by_user;
  std::vector<double> network;
  std::vector<double> by_region;
  std::vector<double> by_word;
};

// Frozen for the duration of an epoch; shared read-only between workers.
struct DecayedCaches {
  std::unordered_map<TopicId, DecayedTopic> topics;
  std::vector<std::array<double, kRelationshipCount>> user_factor;  // alpha-bar_{u,f,t}

  const DecayedTopic* find(TopicId id) const {
    auto it = topics.find(id);
    return it == topics.end() ? nullptr : &it->second;
  }

  static DecayedCaches compute(const HistoryRing& ring, const LedgerShape& shape, double lambda,
                               std::size_t delta_max);
};

// Provisional ids are handed out by parallel workers and replaced at merge time.
inline constexpr TopicId kProvisionalBit = TopicId{1} << 63;
constexpr bool is_provisional(TopicId id) { return (id & kProvisionalBit) != 0; }

// Monotone topic id allocator. Ids are never reused.
class TopicTable {
 public:
  TopicId allocate() { return next_++; }
  TopicId next_id() const { return next_; }
  void retire(TopicId id) { retired_.push_back(id); }
  std::span<const TopicId> retired() const { return retired_; }
  void pin(TopicId id) { pinned_.push_back(id); }
  bool is_pinned(TopicId id) const;
  std::span<const TopicId> pinned() const { return pinned_; }
  // Switches allocation to the provisional id range of one worker.
  void begin_provisional(std::size_t shard) { next_ = kProvisionalBit | (TopicId{shard} << 40); }

  void restore(TopicId next, std::vector<TopicId> retired, std::vector<TopicId> pinned) {
    next_ = next;
    retired_ = std::move(retired);
    pinned_ = std::move(pinned);
  }

  friend bool operator==(const TopicTable&, const TopicTable&) = default;

 private:
  TopicId next_ = 0;
  std::vector<TopicId> retired_;
  std::vector<TopicId> pinned_;
};

// Per-epoch tallies kept for trend analysis (independent of the rollover mode).
struct EpochSummary {
  EpochIndex epoch = 0;
  std::map<TopicId, std::vector<std::int32_t>> topic_user;  // n_{k,u,t}
  std::map<TopicId, FactorCounts> topic_factor;             // sum_u n_{k,u,f,t}
  std::vector<FactorCounts> user_factor;                    // m_{u,f,t}

  friend bool operator==(const EpochSummary&, const EpochSummary&) = default;
};

}  // namespace relcrp
