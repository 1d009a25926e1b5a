#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relcrp {

using UserId = std::uint32_t;
using RegionId = std::uint32_t;
using VocabId = std::uint32_t;
using TopicId = std::uint64_t;
using EpochIndex = std::uint32_t;
using PostId = std::int64_t;

// Held-out tokens that never occurred in training. Scored as a uniform 1/V term.
inline constexpr VocabId kOovToken = std::numeric_limits<VocabId>::max();

// Recoverable failure: bad input, bad configuration, precondition violation.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal invariant (negative count, all-zero score vector, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

// The four relationships a post's topic choice can be driven by.
enum class Relationship : std::uint8_t {
  World = 0,
  SelfPref = 1,
  Network = 2,
  Geography = 3,
};

inline constexpr std::size_t kRelationshipCount = 4;
inline constexpr std::array<Relationship, kRelationshipCount> kAllRelationships{
    Relationship::World, Relationship::SelfPref, Relationship::Network,
    Relationship::Geography};

constexpr std::size_t index_of(Relationship r) { return static_cast<std::size_t>(r); }

std::string_view to_string(Relationship r);

// Accepts "world"/"w", "self"/"selfpref"/"u", "network"/"n", "geography"/"geo"/"g".
std::optional<Relationship> parse_relationship(std::string_view text);
// Same, throwing Error on an unknown name.
Relationship require_relationship(std::string_view text);

// Non-owning bitmask over Relationship.
class FactorSet {
 public:
  constexpr FactorSet() = default;

  static constexpr FactorSet all() { return FactorSet(0b1111); }
  static constexpr FactorSet only(Relationship r) {
    return FactorSet(static_cast<std::uint8_t>(1u << index_of(r)));
  }

  // Comma separated list, e.g. "u,n,w". Throws Error on unknown names.
  static FactorSet parse(std::string_view text);

  constexpr bool contains(Relationship r) const { return (bits_ >> index_of(r)) & 1u; }
  constexpr void insert(Relationship r) { bits_ |= static_cast<std::uint8_t>(1u << index_of(r)); }
  constexpr bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  std::vector<Relationship> members() const;
  std::string to_string() const;
  constexpr std::uint8_t bits() const { return bits_; }

  friend constexpr bool operator==(FactorSet, FactorSet) = default;

 private:
  constexpr explicit FactorSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

// Latent labels of one post.
struct Assignment {
  PostId post_id = 0;
  TopicId topic = 0;
  Relationship factor = Relationship::World;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

}  // namespace relcrp
