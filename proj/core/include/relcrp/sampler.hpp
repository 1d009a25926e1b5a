#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "relcrp/corpus.hpp"
#include "relcrp/model.hpp"
#include "relcrp/model_state.hpp"

namespace relcrp {

// Half-open range of corpus post indices, all from one epoch.
struct BatchRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  EpochIndex epoch = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const BatchRange&, const BatchRange&) = default;
};

// Splits the corpus into consecutive batches of at most batch_size posts,
// cutting at every epoch boundary. The first batch may use its own size.
std::vector<BatchRange> plan_batches(const Corpus& corpus, std::size_t batch_size,
                                     std::size_t first_batch_size = 0);

struct MiniBatch {
  std::span<const Post> posts;
  // Empty until the first sweep; afterwards one entry per post.
  std::vector<Assignment> assignments;
};

// Runs max(sweeps, 1) passes over the batch when it has no assignments yet:
// the first pass is the first-visit initialization, later passes re-sample
// every post. A batch that is already assigned gets `sweeps` re-sampling passes.
void process_minibatch(MiniBatch& batch, ModelState& state, std::size_t sweeps, Rng& rng);

// Removes the post's labels from the counts and draws new ones (revisit).
void resample_post(const Post& post, Assignment& assignment, ModelState& state, Rng& rng);

// Sum over tokens of log phi_z(w) with the current posterior mean.
double post_log_likelihood(const Post& post, TopicId z, const ModelState& state);

struct BatchProgress {
  std::size_t batch_index = 0;
  std::size_t posts_done = 0;
  std::size_t batch_posts = 0;
  EpochIndex epoch = 0;
  std::size_t live_topics = 0;
  double log_likelihood = 0.0;
  double seconds = 0.0;
};

struct FitOptions {
  std::size_t batch_size = 35000;
  std::size_t sweeps = 100;
  std::uint64_t seed = 1;
  bool record_assignments = true;
  // Write a checkpoint every this many batches (0 disables).
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  std::function<void(const BatchProgress&)> on_batch;
};

struct FitResult {
  ModelState state;
  // Final labels in corpus order (empty when not recorded).
  std::vector<Assignment> assignments;
};

struct Checkpoint;

// Online fitting loop: batches in arrival order, `sweeps` passes each, earlier
// batches frozen, epoch rollover before the first batch of every new epoch.
class SequentialFitter {
 public:
  SequentialFitter(const Corpus& corpus, const Hyperparams& hyper, FitOptions options);
  SequentialFitter(const Corpus& corpus, const Checkpoint& checkpoint, FitOptions options);

  bool done() const { return next_batch_ >= batches_.size(); }
  // Processes one batch; returns false once the corpus is exhausted.
  bool step();
  void run();

  const ModelState& state() const { return state_; }
  std::size_t batches_done() const { return next_batch_; }
  std::size_t batch_count() const { return batches_.size(); }
  Checkpoint checkpoint() const;
  FitResult finish() &&;

 private:
  const Corpus* corpus_;
  FitOptions options_;
  std::vector<BatchRange> batches_;
  ModelState state_;
  Rng rng_;
  std::size_t next_batch_ = 0;
  std::vector<Assignment> assignments_;
};

FitResult fit_sequential(const Corpus& corpus, const Hyperparams& hyper, const FitOptions& options);

}  // namespace relcrp
