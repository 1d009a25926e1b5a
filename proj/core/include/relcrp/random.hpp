#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace relcrp {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Independent stream for (seed, round, shard). Used so parallel runs are
// reproducible for any worker count.
Rng make_stream(std::uint64_t seed, std::uint64_t round, std::uint64_t shard);

// Draws an index proportionally to non-negative weights. Throws InvariantError
// when the total is zero or not finite.
std::size_t sample_categorical(std::span<const double> weights, Rng& rng);

// Same, for log-weights (entries may be -inf). Max-shifted before exponentiation.
std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng);

// Normalizes log-weights in place into probabilities.
void normalize_log_weights(std::span<double> log_weights);

// Dirichlet draw via normalized Gamma variates.
std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng);

std::string save_rng(const Rng& rng);
Rng load_rng(const std::string& text);

}  // namespace relcrp
