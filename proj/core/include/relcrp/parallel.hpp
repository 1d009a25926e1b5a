#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relcrp/sampler.hpp"

namespace relcrp {

// Contiguous shard ranges [j*n/K, (j+1)*n/K) of an n-post batch.
std::vector<std::pair<std::size_t, std::size_t>> shard_ranges(std::size_t n, std::size_t workers);

// What a worker sends back: its final labels (shard order) and the counts they
// contribute. Topics it created carry provisional ids.
struct DeltaCounts {
  std::size_t shard = 0;
  std::vector<Assignment> labels;
  // Provisional ids with at least one post, in creation order.
  std::vector<TopicId> provisional;
  CountLedger counts;
};

struct MergeReport {
  // Provisional id -> global id, in allocation order.
  std::vector<std::pair<TopicId, TopicId>> remap;
  // All shards' labels in batch order, remapped to global ids.
  std::vector<Assignment> labels;
  // Indices into the batch of posts that were on a provisional topic.
  std::vector<std::size_t> flagged;
  double merge_ms = 0.0;
};

// Samples one shard against a private copy of the snapshot: first-visit
// initialization followed by sweeps-1 revisits (max(sweeps,1) passes total).
DeltaCounts run_shard(std::span<const Post> posts, const ModelState& snapshot, std::size_t shard,
                      std::size_t sweeps, Rng rng);

// Builds the delta a set of labels contributes. Rows are created for every
// topic referenced.
CountLedger delta_from_labels(std::span<const Post> posts, std::span<const Assignment> labels,
                              const ModelState& shape_source);

// Validates every delta first (a non-provisional topic unknown to the master
// is an InvariantError and nothing is merged), then allocates global ids in
// shard order, folds the counts and remaps the labels.
MergeReport merge_deltas(ModelState& master, std::span<const DeltaCounts> deltas);

// Re-samples the flagged posts for `sweeps` passes with the full global state.
void consolidate_new_topics(ModelState& state, std::span<const Post> posts,
                            std::vector<Assignment>& labels, std::span<const std::size_t> flagged,
                            std::size_t sweeps, Rng& rng);

struct RoundMetrics {
  std::size_t round = 0;
  EpochIndex epoch = 0;
  std::size_t posts = 0;
  std::size_t provisional_topics = 0;
  std::size_t flagged_posts = 0;
  double worker_ms = 0.0;
  double merge_ms = 0.0;
  double resample_ms = 0.0;

  nlohmann::json to_json() const;
};

struct ParallelOptions {
  std::size_t workers = 7;
  std::size_t batch_size = 35000;
  // Size of the sequential first batch; 0 reuses batch_size.
  std::size_t initial_batch_size = 0;
  std::size_t sweeps = 100;
  std::uint64_t seed = 1;
  bool record_assignments = true;
  std::function<void(const RoundMetrics&)> on_round;
  // Called inside each worker before sampling; a throw aborts the round.
  std::function<void(std::size_t round, std::size_t shard)> worker_hook;
};

// Master runs the first batch sequentially, then every later batch is split
// into `workers` shards sampled concurrently against a frozen snapshot,
// merged, and the posts on new topics are re-sampled by the master.
FitResult fit_parallel(const Corpus& corpus, const Hyperparams& hyper, const ParallelOptions& options);

}  // namespace relcrp
