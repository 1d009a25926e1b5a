#include "relcrp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "relcrp/types.hpp"

namespace relcrp {

Rng make_stream(std::uint64_t seed, std::uint64_t round, std::uint64_t shard) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(round >> 32),
                    static_cast<std::uint32_t>(shard), static_cast<std::uint32_t>(shard >> 32),
                    0x5eedu};
  return Rng(seq);
}

std::size_t sample_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total))
    throw InvariantError("categorical draw over weights with non-positive total");
  const double target = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (target < acc) return i;
  }
  return last_positive;
}

void normalize_log_weights(std::span<double> log_weights) {
  double max = -std::numeric_limits<double>::infinity();
  for (double w : log_weights) max = std::max(max, w);
  if (!std::isfinite(max)) throw InvariantError("all log-weights are -inf");
  double total = 0.0;
  for (double& w : log_weights) {
    w = std::exp(w - max);
    total += w;
  }
  for (double& w : log_weights) w /= total;
}

std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng) {
  std::vector<double> p(log_weights.begin(), log_weights.end());
  normalize_log_weights(p);
  return sample_categorical(p, rng);
}

std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng) {
  std::vector<double> draw(concentration.size());
  double total = 0.0;
  for (std::size_t i = 0; i < concentration.size(); ++i) {
    if (concentration[i] <= 0.0) {
      draw[i] = 0.0;
      continue;
    }
    std::gamma_distribution<double> gamma(concentration[i], 1.0);
    draw[i] = gamma(rng);
    total += draw[i];
  }
  if (!(total > 0.0)) {
    // Every gamma variate underflowed (tiny concentrations): fall back to a
    // point mass drawn proportionally to the concentrations.
    std::fill(draw.begin(), draw.end(), 0.0);
    draw[sample_categorical(concentration, rng)] = 1.0;
    return draw;
  }
  for (double& d : draw) d /= total;
  return draw;
}

std::string save_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng load_rng(const std::string& text) {
  std::istringstream is(text);
  Rng rng;
  is >> rng;
  if (!is) throw Error("malformed RNG state");
  return rng;
}

}  // namespace relcrp
