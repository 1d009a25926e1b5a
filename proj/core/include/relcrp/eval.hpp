#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "relcrp/corpus.hpp"
#include "relcrp/model_state.hpp"

namespace relcrp {

struct PerplexityReport {
  std::vector<double> post_log_likelihood;
  std::size_t words = 0;
  double perplexity = 0.0;

  double log_likelihood() const;
  nlohmann::json to_json() const;
};

// log P(w_d) = log sum_f pi_{u,f} sum_k P(z=k | f) prod_l phi_k(w_l), with
// posterior-mean pi and phi, P(z=k | f) = mass_k / (sum mass + alpha_new) and
// the new-topic slot scoring 1/V per token. Out-of-vocabulary tokens score 1/V
// under every topic.
double heldout_log_likelihood(const Post& post, const ModelState& state);
PerplexityReport perplexity(const ModelState& state, const Corpus& heldout);

struct ClusteringScores {
  double nmi = 0.0;
  double rand_index = 0.0;
  double pairwise_f1 = 0.0;

  nlohmann::json to_json() const;
};

// nMI uses the arithmetic mean of the two entropies; F1 is over co-clustered pairs.
ClusteringScores clustering_scores(std::span<const std::int64_t> pred, std::span<const std::int64_t> gold);

// Rows x epochs. When normalized, every unmasked column sums to 1; masked
// columns had no counts and are all zero.
struct TrendMatrix {
  std::vector<std::string> rows;
  std::vector<EpochIndex> columns;
  std::vector<std::vector<double>> values;  // values[row][column]
  std::vector<bool> masked;
  bool normalized = true;

  double at(std::size_t row, std::size_t column) const { return values[row][column]; }
  std::vector<double> column(std::size_t c) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Every archived epoch plus the open one.
std::vector<EpochSummary> epoch_summaries(const ModelState& state);

// p_{k,t} for the given users: n_{k,u,t} summed over the subset, per column.
TrendMatrix topic_trends(const ModelState& state, std::span<const UserId> users);
// p_{f,t}: m_{u,f,t} summed over the subset. Rows are the four relationships.
TrendMatrix personality_trends(const ModelState& state, std::span<const UserId> users);
// p(f | k, t) from the topic's per-factor post counts.
TrendMatrix topic_character(const ModelState& state, TopicId k);

struct MajorEvent {
  std::size_t row = 0;
  std::string label;
  EpochIndex epoch = 0;
  double share = 0.0;

  friend bool operator==(const MajorEvent&, const MajorEvent&) = default;
};

// (k, t) is flagged when p_{k,t} is its column's maximum, at least `threshold`
// and at least twice the runner-up.
std::vector<MajorEvent> detect_major_events(const TrendMatrix& trends, double threshold = 0.3);

// KL(a || b) in nats. b must be positive wherever a is (pass smoothed rows).
double topic_kl(std::span<const double> a, std::span<const double> b);

struct FeatureRecord {
  std::vector<double> topic;
  double day = 0.0;
  double interactions = 0.0;
  std::int64_t label = 0;
};

// Distance = KL(query || candidate)/s_kl + |days|/s_day + |interactions|/s_int,
// each s the median of that term over the training set (1 when the median is 0).
// Majority vote over the k nearest; ties go to the smallest label.
std::int64_t knn_predict(const FeatureRecord& query, std::span<const FeatureRecord> training, std::size_t k = 5);

// phi-hat for every topic used in `assignments`, estimated from the labelled
// posts themselves: (n_{k,v} + beta) / (n_k + V beta).
std::unordered_map<TopicId, std::vector<double>> topic_word_table(const Corpus& corpus,
                                                                  std::span<const Assignment> assignments,
                                                                  double beta);

struct PredictionConfig {
  std::size_t k = 5;
  // Posts from this epoch on are queries; earlier posts are training records.
  EpochIndex test_epoch = 0;
  std::size_t max_queries = 2000;
  std::uint64_t seed = 1;
  double beta = 0.1;
};

struct PredictionReport {
  std::string task;
  std::size_t queries = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;

  nlohmann::json to_json() const;
};

// Is user u the author of post p? Training records for u are all of u's
// earlier posts (positive) and an equal number of other users' earlier posts
// (negative). Each test post yields one positive and one negative query.
PredictionReport authorship_prediction(const Corpus& corpus, std::span<const Assignment> assignments,
                                       const PredictionConfig& config);

struct Comment {
  std::size_t post = 0;  // corpus index
  UserId user = 0;
};

// Lines "post_id<TAB>commenter_label".
std::vector<Comment> read_comments(std::istream& in, const Corpus& corpus);

// Does user u comment on post p by v? Features add the number of earlier
// comments between u and v (either direction).
PredictionReport commenting_prediction(const Corpus& corpus, std::span<const Assignment> assignments,
                                       std::span<const Comment> comments, const PredictionConfig& config);

}  // namespace relcrp
