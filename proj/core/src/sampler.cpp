#include "relcrp/sampler.hpp"

#include <chrono>
#include <cmath>

#include "relcrp/checkpoint.hpp"

namespace relcrp {

std::vector<BatchRange> plan_batches(const Corpus& corpus, std::size_t batch_size,
                                     std::size_t first_batch_size) {
  if (batch_size == 0) throw Error("batch size must be positive");
  if (first_batch_size == 0) first_batch_size = batch_size;
  std::vector<BatchRange> out;
  const auto posts = corpus.posts();
  std::size_t i = 0;
  while (i < posts.size()) {
    const EpochIndex epoch = posts[i].epoch;
    const std::size_t limit = out.empty() ? first_batch_size : batch_size;
    std::size_t j = i;
    while (j < posts.size() && j - i < limit && posts[j].epoch == epoch) ++j;
    out.push_back(BatchRange{i, j, epoch});
    i = j;
  }
  return out;
}

void resample_post(const Post& post, Assignment& assignment, ModelState& state, Rng& rng) {
  state.remove(post, assignment.topic, assignment.factor);
  assignment = sample_assignment(post, state, rng, assignment.topic);
}

void process_minibatch(MiniBatch& batch, ModelState& state, std::size_t sweeps, Rng& rng) {
  std::size_t passes = sweeps;
  if (batch.assignments.empty()) {
    batch.assignments.reserve(batch.posts.size());
    for (const auto& post : batch.posts) batch.assignments.push_back(sample_assignment(post, state, rng));
    passes = sweeps > 0 ? sweeps - 1 : 0;
  } else if (batch.assignments.size() != batch.posts.size()) {
    throw Error("mini-batch has a partial assignment vector");
  }
  for (std::size_t sweep = 0; sweep < passes; ++sweep)
    for (std::size_t i = 0; i < batch.posts.size(); ++i)
      resample_post(batch.posts[i], batch.assignments[i], state, rng);
}

double post_log_likelihood(const Post& post, TopicId z, const ModelState& state) {
  const auto& hyper = state.hyper();
  const auto* row = state.ledger().find(z);
  const auto* d = hyper.dynamic ? state.caches().find(z) : nullptr;
  const double V = static_cast<double>(state.vocab_size());
  double denom = V * hyper.beta;
  if (row) denom += static_cast<double>(row->words);
  if (d) denom += d->words;
  double ll = 0.0;
  for (VocabId v : post.tokens) {
    if (v >= state.vocab_size()) {
      ll -= std::log(V);
      continue;
    }
    double num = hyper.beta;
    if (row) num += row->by_word[v];
    if (d) num += d->by_word[v];
    ll += std::log(num / denom);
  }
  return ll;
}

// ---------------------------------------------------------- SequentialFitter

SequentialFitter::SequentialFitter(const Corpus& corpus, const Hyperparams& hyper, FitOptions options)
    : corpus_(&corpus),
      options_(std::move(options)),
      batches_(plan_batches(corpus, options_.batch_size)),
      state_(hyper, corpus.shared_graph(), corpus.vocab_size()),
      rng_(options_.seed) {
  if (corpus.empty()) throw Error("cannot fit an empty corpus");
  if (options_.record_assignments) assignments_.resize(corpus.size());
}

SequentialFitter::SequentialFitter(const Corpus& corpus, const Checkpoint& checkpoint, FitOptions options)
    : corpus_(&corpus),
      options_(std::move(options)),
      batches_(plan_batches(corpus, options_.batch_size)),
      state_(checkpoint.state),
      rng_(load_rng(checkpoint.rng_state)),
      next_batch_(checkpoint.next_batch) {
  if (checkpoint.batch_size != options_.batch_size)
    throw Error("checkpoint was written with batch size " + std::to_string(checkpoint.batch_size));
  if (next_batch_ > batches_.size()) throw Error("checkpoint cursor is past the end of the corpus");
  if (options_.record_assignments) {
    assignments_ = checkpoint.assignments;
    assignments_.resize(corpus.size());
  }
}

bool SequentialFitter::step() {
  if (done()) return false;
  const auto start = std::chrono::steady_clock::now();
  const BatchRange range = batches_[next_batch_];
  state_.advance_to(range.epoch);

  MiniBatch batch{corpus_->posts().subspan(range.begin, range.size()), {}};
  process_minibatch(batch, state_, options_.sweeps, rng_);

  double ll = 0.0;
  for (std::size_t i = 0; i < batch.posts.size(); ++i) {
    ll += post_log_likelihood(batch.posts[i], batch.assignments[i].topic, state_);
    if (options_.record_assignments) assignments_[range.begin + i] = batch.assignments[i];
  }
  ++next_batch_;

  if (options_.checkpoint_every > 0 && !options_.checkpoint_path.empty() &&
      next_batch_ % options_.checkpoint_every == 0)
    save_checkpoint(options_.checkpoint_path, checkpoint());

  if (options_.on_batch) {
    BatchProgress p;
    p.batch_index = next_batch_ - 1;
    p.posts_done = range.end;
    p.batch_posts = range.size();
    p.epoch = range.epoch;
    p.live_topics = state_.live_topics().size();
    p.log_likelihood = ll;
    p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    options_.on_batch(p);
  }
  return true;
}

void SequentialFitter::run() {
  while (step()) {
  }
}

Checkpoint SequentialFitter::checkpoint() const {
  Checkpoint c;
  c.state = state_;
  c.rng_state = save_rng(rng_);
  c.next_batch = next_batch_;
  c.batch_size = options_.batch_size;
  c.sweeps = options_.sweeps;
  c.seed = options_.seed;
  if (options_.record_assignments && next_batch_ > 0) {
    const std::size_t n = batches_[next_batch_ - 1].end;
    c.assignments.assign(assignments_.begin(), assignments_.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return c;
}

FitResult SequentialFitter::finish() && {
  return FitResult{std::move(state_), std::move(assignments_)};
}

FitResult fit_sequential(const Corpus& corpus, const Hyperparams& hyper, const FitOptions& options) {
  SequentialFitter fitter(corpus, hyper, options);
  fitter.run();
  return std::move(fitter).finish();
}

}  // namespace relcrp
