#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "relcrp/corpus.hpp"
#include "relcrp/stats.hpp"

namespace relcrp {

// The sampler's mutable world: hyperparameters, current-epoch counts, the
// decayed history and the topic allocator. Copyable; copies share the user
// graph and the (immutable) decayed caches.
class ModelState {
 public:
  ModelState() = default;
  ModelState(Hyperparams hyper, std::shared_ptr<const UserGraph> graph, std::size_t vocab_size);

  const Hyperparams& hyper() const { return hyper_; }
  const UserGraph& graph() const { return *graph_; }
  std::shared_ptr<const UserGraph> shared_graph() const { return graph_; }
  std::size_t vocab_size() const { return ledger_.shape().vocab; }
  EpochIndex epoch() const { return epoch_; }

  const CountLedger& ledger() const { return ledger_; }
  const HistoryRing& history() const { return ring_; }
  const DecayedCaches& caches() const { return *caches_; }
  TopicTable& topics() { return topics_; }
  const TopicTable& topics() const { return topics_; }

  // Live topics are exactly the ledger rows: topics with current counts, ring
  // counts, or created earlier in this epoch.
  std::span<const TopicId> live_topics() const { return ledger_.topic_ids(); }

  // Allocates the next id with all counts zero.
  TopicId spawn_topic();
  // Adds a zero row for an id allocated elsewhere (merge of worker topics).
  void add_topic(TopicId id);

  void apply(const Post& post, TopicId z, Relationship f);
  void remove(const Post& post, TopicId z, Relationship f);
  void fold(const CountLedger& delta, const std::function<TopicId(TopicId)>& remap);

  // Closes the current epoch: archives its tallies, pushes the counts into the
  // history ring, recomputes the decayed caches, zeroes the current counts and
  // retires topics with no current or ring-resident support. In static mode
  // counts carry over and only unused topics retire.
  void advance_epoch();
  void advance_to(EpochIndex epoch);

  std::span<const EpochSummary> archive() const { return archive_; }
  // Tallies of the open epoch.
  EpochSummary current_summary() const;

  // Posterior mean of pi_u over the enabled factors (zero for disabled ones).
  std::array<double, kRelationshipCount> personality(UserId u) const;
  // Posterior mean of phi_k; uniform 1/V for an unknown topic.
  std::vector<double> topic_word(TopicId k) const;

  // Approximate number of live count cells (ledger + ring + caches). Grows with
  // users, topics and vocabulary, never with the number of posts seen.
  std::size_t footprint() const;

  // Copy without the archive, baseline and history ring, for worker
  // snapshots. It can sample within the open epoch but must not advance.
  ModelState sampling_copy() const;

 private:
  friend struct CheckpointAccess;

  EpochSummary summarize() const;

  Hyperparams hyper_;
  std::shared_ptr<const UserGraph> graph_;
  CountLedger ledger_;
  HistoryRing ring_;
  std::shared_ptr<const DecayedCaches> caches_ = std::make_shared<DecayedCaches>();
  TopicTable topics_;
  EpochIndex epoch_ = 0;
  std::vector<EpochSummary> archive_;
  // Static mode only: cumulative tallies at the start of the open epoch.
  EpochSummary baseline_;
};

// Stats-level entry point for the epoch rollover.
inline void advance_epoch(ModelState& state) { state.advance_epoch(); }

}  // namespace relcrp
