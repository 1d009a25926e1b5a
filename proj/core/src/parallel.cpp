#include "relcrp/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace relcrp {
namespace {

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> shard_ranges(std::size_t n, std::size_t workers) {
  if (workers == 0) throw Error("worker count must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(workers);
  for (std::size_t j = 0; j < workers; ++j) out.emplace_back(j * n / workers, (j + 1) * n / workers);
  return out;
}

CountLedger delta_from_labels(std::span<const Post> posts, std::span<const Assignment> labels,
                              const ModelState& shape_source) {
  if (posts.size() != labels.size()) throw Error("labels and posts differ in length");
  CountLedger delta(shape_source.ledger().shape());
  for (std::size_t i = 0; i < posts.size(); ++i) {
    delta.ensure_topic(labels[i].topic);
    delta.apply(posts[i], labels[i].topic, labels[i].factor, shape_source.graph());
  }
  return delta;
}

DeltaCounts run_shard(std::span<const Post> posts, const ModelState& snapshot, std::size_t shard,
                      std::size_t sweeps, Rng rng) {
  ModelState local = snapshot.sampling_copy();
  local.topics().begin_provisional(shard);
  MiniBatch batch{posts, {}};
  process_minibatch(batch, local, sweeps, rng);

  DeltaCounts out;
  out.shard = shard;
  out.labels = std::move(batch.assignments);
  std::unordered_set<TopicId> seen;
  for (const auto& a : out.labels)
    if (is_provisional(a.topic) && seen.insert(a.topic).second) out.provisional.push_back(a.topic);
  std::sort(out.provisional.begin(), out.provisional.end());
  out.counts = delta_from_labels(posts, out.labels, local);
  return out;
}

MergeReport merge_deltas(ModelState& master, std::span<const DeltaCounts> deltas) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& d : deltas) {
    for (TopicId id : d.counts.topic_ids()) {
      if (!is_provisional(id) && !master.ledger().contains(id))
        throw InvariantError("delta from shard " + std::to_string(d.shard) + " references unknown topic " +
                             std::to_string(id));
      if (is_provisional(id) && std::find(d.provisional.begin(), d.provisional.end(), id) == d.provisional.end())
        throw InvariantError("delta from shard " + std::to_string(d.shard) +
                             " carries an undeclared provisional topic");
    }
    if (d.counts.shape() != master.ledger().shape()) throw InvariantError("delta has the wrong ledger shape");
  }

  MergeReport report;
  std::unordered_map<TopicId, TopicId> remap;
  for (const auto& d : deltas)
    for (TopicId id : d.provisional) {
      const TopicId global = master.spawn_topic();
      remap.emplace(id, global);
      report.remap.emplace_back(id, global);
    }
  auto map_id = [&](TopicId id) { return is_provisional(id) ? remap.at(id) : id; };

  for (const auto& d : deltas) {
    master.fold(d.counts, map_id);
    for (const auto& a : d.labels) {
      if (is_provisional(a.topic)) report.flagged.push_back(report.labels.size());
      report.labels.push_back(Assignment{a.post_id, map_id(a.topic), a.factor});
    }
  }
  report.merge_ms = ms_since(start);
  return report;
}

void consolidate_new_topics(ModelState& state, std::span<const Post> posts,
                            std::vector<Assignment>& labels, std::span<const std::size_t> flagged,
                            std::size_t sweeps, Rng& rng) {
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep)
    for (std::size_t i : flagged) resample_post(posts[i], labels[i], state, rng);
}

nlohmann::json RoundMetrics::to_json() const {
  return {{"round", round},
          {"epoch", epoch},
          {"posts", posts},
          {"provisional_topics", provisional_topics},
          {"flagged_posts", flagged_posts},
          {"worker_ms", worker_ms},
          {"merge_ms", merge_ms},
          {"resample_ms", resample_ms}};
}

FitResult fit_parallel(const Corpus& corpus, const Hyperparams& hyper, const ParallelOptions& options) {
  if (corpus.empty()) throw Error("cannot fit an empty corpus");
  if (options.workers == 0) throw Error("worker count must be positive");
  if (options.batch_size < options.workers) throw Error("batch size must be at least the worker count");

  const auto batches = plan_batches(corpus, options.batch_size, options.initial_batch_size);
  ModelState state(hyper, corpus.shared_graph(), corpus.vocab_size());
  Rng rng(options.seed);
  std::vector<Assignment> assignments;
  if (options.record_assignments) assignments.resize(corpus.size());

  for (std::size_t b = 0; b < batches.size(); ++b) {
    const BatchRange& range = batches[b];
    state.advance_to(range.epoch);
    const auto posts = corpus.posts().subspan(range.begin, range.size());
    std::vector<Assignment> labels;

    if (b == 0) {
      MiniBatch batch{posts, {}};
      process_minibatch(batch, state, options.sweeps, rng);
      labels = std::move(batch.assignments);
    } else {
      RoundMetrics metrics;
      metrics.round = b;
      metrics.epoch = range.epoch;
      metrics.posts = posts.size();

      const auto shards = shard_ranges(posts.size(), options.workers);
      std::vector<DeltaCounts> deltas(shards.size());
      std::vector<std::exception_ptr> errors(shards.size());
      const auto worker_start = std::chrono::steady_clock::now();
      {
        const ModelState& snapshot = state;
        std::vector<std::jthread> threads;
        threads.reserve(shards.size());
        for (std::size_t j = 0; j < shards.size(); ++j) {
          threads.emplace_back([&, j] {
            try {
              if (options.worker_hook) options.worker_hook(b, j);
              const auto [lo, hi] = shards[j];
              deltas[j] = run_shard(posts.subspan(lo, hi - lo), snapshot, j, options.sweeps,
                                    make_stream(options.seed, b, j));
            } catch (...) {
              errors[j] = std::current_exception();
            }
          });
        }
      }
      metrics.worker_ms = ms_since(worker_start);
      for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

      MergeReport report = merge_deltas(state, deltas);
      metrics.merge_ms = report.merge_ms;
      metrics.provisional_topics = report.remap.size();
      metrics.flagged_posts = report.flagged.size();

      const auto resample_start = std::chrono::steady_clock::now();
      consolidate_new_topics(state, posts, report.labels, report.flagged, options.sweeps, rng);
      metrics.resample_ms = ms_since(resample_start);
      labels = std::move(report.labels);
      if (options.on_round) options.on_round(metrics);
    }

    if (options.record_assignments)
      std::copy(labels.begin(), labels.end(), assignments.begin() + static_cast<std::ptrdiff_t>(range.begin));
  }
  return FitResult{std::move(state), std::move(assignments)};
}

}  // namespace relcrp
