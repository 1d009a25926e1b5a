#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "relcrp/types.hpp"

namespace relcrp {

// One social-media message.
struct Post {
  PostId id = 0;
  UserId user = 0;
  EpochIndex epoch = 0;
  std::int64_t timestamp = 0;
  std::vector<VocabId> tokens;
  std::optional<std::int64_t> gold;

  friend bool operator==(const Post&, const Post&) = default;
};

struct User {
  std::string label;
  RegionId region = 0;
  // Directed followee edges; Network neighbors of a user are its followees.
  std::vector<UserId> followees;

  friend bool operator==(const User&, const User&) = default;
};

// Users, regions and the follow graph. Immutable once built and shared by
// every ModelState built over the same population.
class UserGraph {
 public:
  UserGraph() = default;
  // Deduplicates and sorts followee lists; throws on self-loops or dangling ids.
  UserGraph(std::vector<User> users, std::vector<std::string> region_labels);

  std::size_t user_count() const { return users_.size(); }
  std::size_t region_count() const { return region_labels_.size(); }
  const User& user(UserId u) const;
  std::span<const User> users() const { return users_; }
  std::span<const std::string> region_labels() const { return region_labels_; }
  RegionId region_of(UserId u) const { return users_[u].region; }
  std::span<const UserId> followees(UserId u) const { return users_[u].followees; }
  // Users that follow u; these are the users whose Network counts change when u posts.
  std::span<const UserId> followers(UserId u) const { return followers_[u]; }
  std::span<const UserId> region_members(RegionId r) const { return region_members_[r]; }
  std::optional<UserId> find(std::string_view label) const;

  friend bool operator==(const UserGraph& a, const UserGraph& b) {
    return a.users_ == b.users_ && a.region_labels_ == b.region_labels_;
  }

 private:
  std::vector<User> users_;
  std::vector<std::string> region_labels_;
  std::vector<std::vector<UserId>> followers_;
  std::vector<std::vector<UserId>> region_members_;
  std::unordered_map<std::string, UserId> by_label_;
};

// String <-> dense id bijection, ids assigned in first-seen order.
class Vocabulary {
 public:
  VocabId add(std::string_view word);
  std::optional<VocabId> find(std::string_view word) const;
  const std::string& word(VocabId id) const { return words_.at(id); }
  std::size_t size() const { return words_.size(); }
  std::span<const std::string> words() const { return words_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, VocabId> ids_;
};

inline constexpr std::string_view kOovWord = "<unk>";

struct IngestConfig {
  // Epoch length in seconds; 15 days by default.
  std::int64_t epoch_length = 15 * 86400;
  // Timestamp of epoch 0. Defaults to the earliest post timestamp.
  std::optional<std::int64_t> origin;
  // Tokens occurring fewer times than this in the post stream are filtered.
  std::size_t min_count = 1;
  // When set, filtered tokens map to the "<unk>" entry instead of being dropped.
  bool map_rare_to_oov = false;
};

struct IngestStats {
  std::size_t dropped_posts = 0;
  std::size_t filtered_tokens = 0;
  std::size_t oov_tokens = 0;

  friend bool operator==(const IngestStats&, const IngestStats&) = default;
};

class Corpus {
 public:
  Corpus() = default;
  // Validates posts against the graph and vocabulary and stably sorts them by
  // epoch, preserving arrival order inside an epoch.
  Corpus(std::shared_ptr<const UserGraph> graph, Vocabulary vocabulary, std::vector<Post> posts,
         std::int64_t origin, std::int64_t epoch_length, bool allow_oov = false);

  std::span<const Post> posts() const { return posts_; }
  const Post& post(std::size_t i) const { return posts_[i]; }
  std::size_t size() const { return posts_.size(); }
  bool empty() const { return posts_.empty(); }

  const UserGraph& graph() const { return *graph_; }
  std::shared_ptr<const UserGraph> shared_graph() const { return graph_; }
  const Vocabulary& vocabulary() const { return vocabulary_; }
  std::size_t vocab_size() const { return vocabulary_.size(); }
  std::size_t user_count() const { return graph_->user_count(); }
  // One past the largest epoch index present.
  std::size_t epoch_count() const { return epoch_count_; }
  std::int64_t origin() const { return origin_; }
  std::int64_t epoch_length() const { return epoch_length_; }

  IngestStats& stats() { return stats_; }
  const IngestStats& stats() const { return stats_; }

  friend bool operator==(const Corpus& a, const Corpus& b);

 private:
  std::shared_ptr<const UserGraph> graph_ = std::make_shared<UserGraph>();
  Vocabulary vocabulary_;
  std::vector<Post> posts_;
  std::int64_t origin_ = 0;
  std::int64_t epoch_length_ = 1;
  std::size_t epoch_count_ = 0;
  IngestStats stats_;
};

// Parses the users file (TSV or JSON lines). Errors carry the line number.
std::shared_ptr<const UserGraph> read_users(std::istream& users);

// Builds a training corpus: vocabulary is built in first-seen order.
Corpus ingest_posts(std::istream& posts, std::istream& users, const IngestConfig& config);
Corpus ingest_posts(std::istream& posts, std::shared_ptr<const UserGraph> graph,
                    const IngestConfig& config);

// Maps a held-out stream through a frozen training vocabulary and user graph.
// Unseen tokens become kOovToken; epochs use the training origin/length.
Corpus ingest_heldout(std::istream& posts, const Corpus& training);

struct HeldoutSplit {
  Corpus train;
  Corpus heldout;
};

// Holds out the last `fraction` (by arrival) of the final epoch's posts. The
// training part is re-ingested so its vocabulary covers only training words;
// the held-out part is mapped through that vocabulary.
HeldoutSplit split_heldout(const Corpus& corpus, double fraction);

// floor((timestamp - origin) / epoch_length); throws when timestamp < origin.
EpochIndex epoch_of(std::int64_t timestamp, std::int64_t epoch_length, std::int64_t origin);

// N(u, R): World -> every user (u included), SelfPref -> {u},
// Network -> followees of u, Geography -> users sharing u's region except u.
std::vector<UserId> neighbors(UserId u, Relationship kind, const UserGraph& graph);
std::vector<UserId> neighbors(UserId u, Relationship kind, const Corpus& corpus);

// TSV writers matching the ingestion format.
void write_posts(std::ostream& out, const Corpus& corpus, bool with_gold = true);
void write_users(std::ostream& out, const UserGraph& graph);

}  // namespace relcrp
