#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relcrp/model_state.hpp"

namespace relcrp {

// Everything needed to continue an online fit bit-exactly: counts, history
// ring, topic allocator, per-epoch archive, RNG state and the batch cursor.
// Decayed caches are not stored; they are recomputed from the ring on load.
struct Checkpoint {
  static constexpr int kVersion = 1;

  ModelState state;
  std::string rng_state;
  std::size_t next_batch = 0;
  std::size_t batch_size = 0;
  std::size_t sweeps = 0;
  std::uint64_t seed = 0;
  std::vector<Assignment> assignments;
};

nlohmann::json model_state_to_json(const ModelState& state);
ModelState model_state_from_json(const nlohmann::json& j, std::shared_ptr<const UserGraph> graph);

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j, std::shared_ptr<const UserGraph> graph);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const UserGraph> graph);

nlohmann::json hyperparams_to_json(const Hyperparams& hyper);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

}  // namespace relcrp
