#pragma once

#include <optional>
#include <span>
#include <vector>

#include "relcrp/model_state.hpp"
#include "relcrp/random.hpp"

namespace relcrp {

// Unnormalized weights over the enabled factors.
struct FactorScores {
  std::vector<Relationship> factors;
  std::vector<double> weights;
};

// Log-weights over the live topics followed by one new-topic slot.
struct TopicScores {
  std::vector<TopicId> topics;
  std::vector<double> log_weights;  // size topics.size() + 1

  double new_slot() const { return log_weights.back(); }
  // Normalized probabilities in the same order.
  std::vector<double> probabilities() const;
};

// Neighbor count of topic `slot` under relationship f for user u, plus its
// decayed history when the model is dynamic:
//   n_{k,t}^{N(R_f,u)} + nbar_{k,t}^{N(R_f,u)}
double neighbor_mass(const ModelState& state, std::size_t slot, UserId u, Relationship f);

// The RelCRP table weights for every live topic (slot order). Shared by the
// sampler and the generator.
std::vector<double> neighbor_masses(const ModelState& state, UserId u, Relationship f);

// Personality term alone: m_{u,f,t} + abar_{u,f,t} + alpha_f.
FactorScores personality_prior(const Post& post, const ModelState& state);

// Influence-factor conditional given the post's current topic:
//   (m_{u,f,t} + abar_{u,f,t} + alpha_f) * c_f / (sum_j n^{N(R_f,u)}_{j,t} + nbar^{N(R_f,u)}_{j,t} + alpha)
// where c_f is the topic's neighbor mass under f, or alpha when no enabled
// relationship gives the topic any mass. The post itself must already be removed from the counts.
FactorScores score_factor(const Post& post, TopicId z_current, const ModelState& state);

// Topic conditional given the factor. Live topic k:
//   log(n^{N}_{k,t} + nbar^{N}_{k,t}) + sum_l log((n_{k,v,t} + bbar_{k,v,t} + beta) / sum_r (...))
// new slot: log(alpha) + N_i * log(1/V). Topics with zero neighbor mass get -inf.
TopicScores score_topic(const Post& post, Relationship f, const ModelState& state);

// Allocates a fresh topic with zero counts.
TopicId spawn_topic(ModelState& state);

// Draws (f, z) for a post and applies it to the counts.
// First visit (no previous topic): f from the personality prior alone, then z.
// Revisit: the caller has removed the post; f from score_factor given the
// previous topic, then z given f. Choosing the new slot spawns a topic.
Assignment sample_assignment(const Post& post, ModelState& state, Rng& rng,
                             std::optional<TopicId> previous_topic = std::nullopt);

// Log joint probability of a complete labelling built as the product of
// sequential conditionals: personality predictive for f, RelCRP predictive for
// z, and the Dirichlet-multinomial predictive for the words (token by token).
// `clusters` are arbitrary labels; a label's first occurrence opens a new topic.
// Intended for small static instances.
double sequence_log_joint(std::span<const Post> posts, std::span<const std::int64_t> clusters,
                          std::span<const Relationship> factors, const Hyperparams& hyper,
                          std::shared_ptr<const UserGraph> graph, std::size_t vocab_size);

}  // namespace relcrp
