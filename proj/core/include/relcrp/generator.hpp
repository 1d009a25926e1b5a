#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relcrp/corpus.hpp"
#include "relcrp/random.hpp"
#include "relcrp/stats.hpp"

namespace relcrp {

enum class RegionScheme { RoundRobin, Random };

struct GenConfig {
  std::size_t users = 50;
  std::size_t regions = 5;
  RegionScheme region_scheme = RegionScheme::RoundRobin;
  // Uniform random directed follow graph: each ordered pair is an edge with
  // probability mean_degree / (users - 1).
  double mean_degree = 5.0;
  // Overrides users/regions/mean_degree when set.
  std::shared_ptr<const UserGraph> graph;
  std::size_t epochs = 3;
  std::size_t posts_per_epoch = 2000;
  std::size_t min_tokens = 5;
  std::size_t max_tokens = 15;
  std::size_t vocab = 500;
  std::int64_t epoch_length = 15 * 86400;
  Hyperparams hyper;
  // Explicit topic-word rows; when present they are the only topics and the
  // new-topic mass is spread uniformly over them.
  std::vector<std::vector<double>> seed_topics;

  void validate() const;
};

// `topics` rows, each uniform over its own contiguous block of the vocabulary.
std::vector<std::vector<double>> disjoint_block_topics(std::size_t topics, std::size_t vocab);

struct GroundTruth {
  std::vector<std::string> words;  // generator word index -> label
  std::vector<std::string> users;
  // personality[t][u] over (world, self, network, geography).
  std::vector<std::vector<std::array<double, kRelationshipCount>>> personality;
  // topics[t][k] = phi_{k,t}, indexed by generator word index.
  std::vector<std::map<TopicId, std::vector<double>>> topics;
  // True labels in corpus order.
  std::vector<Assignment> assignments;

  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);
};

struct Generated {
  Corpus corpus;
  GroundTruth truth;
};

// Runs the mixture of relational CRPs forward. The table weights come from
// neighbor_masses, the same function the sampler scores with. Posts are
// written in the ingestion format and parsed back, so the corpus is exactly
// what a reader of the emitted files would see; gold labels are the true topics.
Generated generate(const GenConfig& config, Rng& rng);

}  // namespace relcrp
