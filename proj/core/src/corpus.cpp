#include "relcrp/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace relcrp {
namespace {

using nlohmann::json;

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::int64_t parse_int(std::string_view s, std::size_t line, const char* what) {
  s = trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error("line " + std::to_string(line) + ": malformed " + what + " '" + std::string(s) + "'");
  return v;
}

bool is_json_line(std::string_view line) {
  line = trim(line);
  return !line.empty() && line.front() == '{';
}

std::string json_scalar(const json& j, std::size_t line, const char* key) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<std::int64_t>());
  throw Error("line " + std::to_string(line) + ": field '" + key + "' must be a string or integer");
}

struct RawPost {
  PostId id;
  std::string user;
  std::int64_t timestamp;
  std::vector<std::string> tokens;
  std::optional<std::int64_t> gold;
};

std::vector<RawPost> read_raw_posts(std::istream& in) {
  std::vector<RawPost> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    RawPost raw;
    if (is_json_line(line)) {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw Error("line " + std::to_string(lineno) + ": malformed JSON record: " + e.what());
      }
      for (const char* key : {"id", "user", "ts", "tokens"})
        if (!j.contains(key)) throw Error("line " + std::to_string(lineno) + ": missing key '" + key + "'");
      if (!j["id"].is_number_integer() || !j["ts"].is_number_integer())
        throw Error("line " + std::to_string(lineno) + ": 'id' and 'ts' must be integers");
      raw.id = j["id"].get<PostId>();
      raw.user = json_scalar(j["user"], lineno, "user");
      raw.timestamp = j["ts"].get<std::int64_t>();
      const auto& tokens = j["tokens"];
      if (tokens.is_array()) {
        for (const auto& t : tokens) raw.tokens.push_back(json_scalar(t, lineno, "tokens"));
      } else if (tokens.is_string()) {
        raw.tokens = split_words(tokens.get<std::string>());
      } else {
        throw Error("line " + std::to_string(lineno) + ": 'tokens' must be an array or string");
      }
      if (j.contains("gold") && !j["gold"].is_null()) {
        if (!j["gold"].is_number_integer())
          throw Error("line " + std::to_string(lineno) + ": 'gold' must be an integer");
        raw.gold = j["gold"].get<std::int64_t>();
      }
    } else {
      auto fields = split(line, '\t');
      if (fields.size() != 4 && fields.size() != 5)
        throw Error("line " + std::to_string(lineno) + ": expected 4 or 5 tab-separated fields, got " +
                    std::to_string(fields.size()));
      raw.id = parse_int(fields[0], lineno, "post id");
      raw.user = std::string(trim(fields[1]));
      if (raw.user.empty()) throw Error("line " + std::to_string(lineno) + ": empty user id");
      raw.timestamp = parse_int(fields[2], lineno, "timestamp");
      raw.tokens = split_words(trim(fields[3]));
      if (fields.size() == 5 && !trim(fields[4]).empty())
        raw.gold = parse_int(fields[4], lineno, "gold label");
    }
    out.push_back(std::move(raw));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- UserGraph

UserGraph::UserGraph(std::vector<User> users, std::vector<std::string> region_labels)
    : users_(std::move(users)), region_labels_(std::move(region_labels)) {
  followers_.assign(users_.size(), {});
  region_members_.assign(region_labels_.size(), {});
  for (UserId u = 0; u < users_.size(); ++u) {
    auto& user = users_[u];
    if (!by_label_.emplace(user.label, u).second) throw Error("duplicate user id '" + user.label + "'");
    if (user.region >= region_labels_.size())
      throw Error("user '" + user.label + "' has unknown region index");
    region_members_[user.region].push_back(u);
    std::sort(user.followees.begin(), user.followees.end());
    user.followees.erase(std::unique(user.followees.begin(), user.followees.end()), user.followees.end());
    for (UserId v : user.followees) {
      if (v == u) throw Error("user '" + user.label + "' follows itself");
      if (v >= users_.size()) throw Error("user '" + user.label + "' follows an unknown user");
    }
  }
  for (UserId u = 0; u < users_.size(); ++u)
    for (UserId v : users_[u].followees) followers_[v].push_back(u);
}

const User& UserGraph::user(UserId u) const {
  if (u >= users_.size()) throw Error("unknown user index " + std::to_string(u));
  return users_[u];
}

std::optional<UserId> UserGraph::find(std::string_view label) const {
  auto it = by_label_.find(std::string(label));
  if (it == by_label_.end()) return std::nullopt;
  return it->second;
}

// --------------------------------------------------------------- Vocabulary

VocabId Vocabulary::add(std::string_view word) {
  std::string key(word);
  auto it = ids_.find(key);
  if (it != ids_.end()) return it->second;
  auto id = static_cast<VocabId>(words_.size());
  words_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

std::optional<VocabId> Vocabulary::find(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

// ------------------------------------------------------------------- Corpus

Corpus::Corpus(std::shared_ptr<const UserGraph> graph, Vocabulary vocabulary, std::vector<Post> posts,
               std::int64_t origin, std::int64_t epoch_length, bool allow_oov)
    : graph_(std::move(graph)),
      vocabulary_(std::move(vocabulary)),
      posts_(std::move(posts)),
      origin_(origin),
      epoch_length_(epoch_length) {
  if (!graph_) throw Error("corpus requires a user graph");
  if (epoch_length_ <= 0) throw Error("epoch length must be positive");
  for (const auto& p : posts_) {
    if (p.tokens.empty()) throw Error("post " + std::to_string(p.id) + " has no tokens");
    if (p.user >= graph_->user_count()) throw Error("post " + std::to_string(p.id) + " has unknown user");
    for (VocabId v : p.tokens) {
      if (v < vocabulary_.size()) continue;
      if (allow_oov && v == kOovToken) continue;
      throw Error("post " + std::to_string(p.id) + " has token id outside the vocabulary");
    }
    epoch_count_ = std::max<std::size_t>(epoch_count_, static_cast<std::size_t>(p.epoch) + 1);
  }
  std::stable_sort(posts_.begin(), posts_.end(),
                   [](const Post& a, const Post& b) { return a.epoch < b.epoch; });
}

bool operator==(const Corpus& a, const Corpus& b) {
  return *a.graph_ == *b.graph_ && a.vocabulary_ == b.vocabulary_ && a.posts_ == b.posts_ &&
         a.origin_ == b.origin_ && a.epoch_length_ == b.epoch_length_;
}

EpochIndex epoch_of(std::int64_t timestamp, std::int64_t epoch_length, std::int64_t origin) {
  if (epoch_length <= 0) throw Error("epoch length must be positive");
  if (timestamp < origin)
    throw Error("timestamp " + std::to_string(timestamp) + " precedes origin " + std::to_string(origin));
  auto e = (timestamp - origin) / epoch_length;
  if (e > std::numeric_limits<EpochIndex>::max()) throw Error("epoch index overflow");
  return static_cast<EpochIndex>(e);
}

std::shared_ptr<const UserGraph> read_users(std::istream& in) {
  struct RawUser {
    std::string id, region;
    std::vector<std::string> followees;
  };
  std::vector<RawUser> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    RawUser u;
    if (is_json_line(line)) {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw Error("line " + std::to_string(lineno) + ": malformed JSON record: " + e.what());
      }
      if (!j.contains("id") || !j.contains("region"))
        throw Error("line " + std::to_string(lineno) + ": user record needs 'id' and 'region'");
      u.id = json_scalar(j["id"], lineno, "id");
      u.region = json_scalar(j["region"], lineno, "region");
      if (j.contains("followees")) {
        const auto& f = j["followees"];
        if (f.is_array()) {
          for (const auto& x : f) u.followees.push_back(json_scalar(x, lineno, "followees"));
        } else if (f.is_string()) {
          for (auto part : split(f.get<std::string>(), ','))
            if (!trim(part).empty()) u.followees.emplace_back(trim(part));
        } else if (!f.is_null()) {
          throw Error("line " + std::to_string(lineno) + ": 'followees' must be an array or string");
        }
      }
    } else {
      auto fields = split(line, '\t');
      if (fields.size() < 2 || fields.size() > 3)
        throw Error("line " + std::to_string(lineno) + ": expected 2 or 3 tab-separated fields, got " +
                    std::to_string(fields.size()));
      u.id = std::string(trim(fields[0]));
      u.region = std::string(trim(fields[1]));
      if (u.id.empty() || u.region.empty())
        throw Error("line " + std::to_string(lineno) + ": empty user or region id");
      if (fields.size() == 3)
        for (auto part : split(fields[2], ','))
          if (!trim(part).empty()) u.followees.emplace_back(trim(part));
    }
    raw.push_back(std::move(u));
  }

  std::unordered_map<std::string, UserId> ids;
  std::unordered_map<std::string, RegionId> regions;
  std::vector<std::string> region_labels;
  std::vector<User> users;
  for (const auto& r : raw) {
    if (!ids.emplace(r.id, static_cast<UserId>(ids.size())).second)
      throw Error("duplicate user id '" + r.id + "'");
    auto [it, inserted] = regions.emplace(r.region, static_cast<RegionId>(region_labels.size()));
    if (inserted) region_labels.push_back(r.region);
    users.push_back(User{r.id, it->second, {}});
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (const auto& f : raw[i].followees) {
      auto it = ids.find(f);
      if (it == ids.end()) throw Error("user '" + raw[i].id + "' follows unknown user '" + f + "'");
      users[i].followees.push_back(it->second);
    }
  }
  return std::make_shared<const UserGraph>(std::move(users), std::move(region_labels));
}

Corpus ingest_posts(std::istream& posts, std::istream& users, const IngestConfig& config) {
  return ingest_posts(posts, read_users(users), config);
}

Corpus ingest_posts(std::istream& posts_in, std::shared_ptr<const UserGraph> graph,
                    const IngestConfig& config) {
  auto raw = read_raw_posts(posts_in);

  std::unordered_map<std::string, std::size_t> freq;
  if (config.min_count > 1)
    for (const auto& r : raw)
      for (const auto& t : r.tokens) ++freq[t];

  std::int64_t origin = 0;
  if (config.origin) {
    origin = *config.origin;
  } else if (!raw.empty()) {
    origin = std::min_element(raw.begin(), raw.end(), [](const RawPost& a, const RawPost& b) {
               return a.timestamp < b.timestamp;
             })->timestamp;
  }

  IngestStats stats;
  Vocabulary vocab;
  std::vector<Post> posts;
  posts.reserve(raw.size());
  for (auto& r : raw) {
    auto user = graph->find(r.user);
    if (!user) throw Error("post " + std::to_string(r.id) + " references unknown user '" + r.user + "'");
    Post p;
    p.id = r.id;
    p.user = *user;
    p.timestamp = r.timestamp;
    p.epoch = epoch_of(r.timestamp, config.epoch_length, origin);
    p.gold = r.gold;
    for (const auto& t : r.tokens) {
      if (config.min_count > 1 && freq[t] < config.min_count) {
        ++stats.filtered_tokens;
        if (config.map_rare_to_oov) {
          p.tokens.push_back(vocab.add(kOovWord));
          ++stats.oov_tokens;
        }
        continue;
      }
      p.tokens.push_back(vocab.add(t));
    }
    if (p.tokens.empty()) {
      ++stats.dropped_posts;
      continue;
    }
    posts.push_back(std::move(p));
  }
  Corpus corpus(std::move(graph), std::move(vocab), std::move(posts), origin, config.epoch_length);
  corpus.stats() = stats;
  return corpus;
}

Corpus ingest_heldout(std::istream& posts_in, const Corpus& training) {
  auto raw = read_raw_posts(posts_in);
  const auto& graph = training.graph();
  const auto& vocab = training.vocabulary();
  const auto unk = vocab.find(kOovWord);
  IngestStats stats;
  std::vector<Post> posts;
  for (auto& r : raw) {
    auto user = graph.find(r.user);
    if (!user) throw Error("post " + std::to_string(r.id) + " references unknown user '" + r.user + "'");
    Post p;
    p.id = r.id;
    p.user = *user;
    p.timestamp = r.timestamp;
    p.epoch = epoch_of(r.timestamp, training.epoch_length(), training.origin());
    p.gold = r.gold;
    for (const auto& t : r.tokens) {
      if (auto id = vocab.find(t)) {
        p.tokens.push_back(*id);
      } else {
        p.tokens.push_back(unk ? *unk : kOovToken);
        ++stats.oov_tokens;
      }
    }
    if (p.tokens.empty()) {
      ++stats.dropped_posts;
      continue;
    }
    posts.push_back(std::move(p));
  }
  Corpus corpus(training.shared_graph(), vocab, std::move(posts), training.origin(),
                training.epoch_length(), /*allow_oov=*/true);
  corpus.stats() = stats;
  return corpus;
}

HeldoutSplit split_heldout(const Corpus& corpus, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("held-out fraction must be in (0, 1)");
  if (corpus.empty()) throw Error("cannot split an empty corpus");
  const auto posts = corpus.posts();
  const EpochIndex last = posts.back().epoch;
  std::size_t first_of_last = posts.size();
  while (first_of_last > 0 && posts[first_of_last - 1].epoch == last) --first_of_last;
  const std::size_t in_last = posts.size() - first_of_last;
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(in_last)));
  if (held == 0 || held == posts.size()) throw Error("held-out fraction leaves one side empty");
  const std::size_t cut = posts.size() - held;

  auto text_of = [&](std::size_t lo, std::size_t hi) {
    Corpus part(corpus.shared_graph(), corpus.vocabulary(),
                std::vector<Post>(posts.begin() + static_cast<std::ptrdiff_t>(lo),
                                  posts.begin() + static_cast<std::ptrdiff_t>(hi)),
                corpus.origin(), corpus.epoch_length(), /*allow_oov=*/true);
    std::stringstream out;
    write_posts(out, part);
    return out;
  };
  IngestConfig config;
  config.epoch_length = corpus.epoch_length();
  config.origin = corpus.origin();
  auto train_text = text_of(0, cut);
  Corpus train = ingest_posts(train_text, corpus.shared_graph(), config);
  auto held_text = text_of(cut, posts.size());
  Corpus heldout = ingest_heldout(held_text, train);
  return HeldoutSplit{std::move(train), std::move(heldout)};
}

std::vector<UserId> neighbors(UserId u, Relationship kind, const UserGraph& graph) {
  if (u >= graph.user_count()) throw Error("unknown user index " + std::to_string(u));
  std::vector<UserId> out;
  switch (kind) {
    case Relationship::World:
      out.resize(graph.user_count());
      for (UserId v = 0; v < out.size(); ++v) out[v] = v;
      break;
    case Relationship::SelfPref:
      out.push_back(u);
      break;
    case Relationship::Network: {
      auto f = graph.followees(u);
      out.assign(f.begin(), f.end());
      break;
    }
    case Relationship::Geography:
      for (UserId v : graph.region_members(graph.region_of(u)))
        if (v != u) out.push_back(v);
      break;
  }
  return out;
}

std::vector<UserId> neighbors(UserId u, Relationship kind, const Corpus& corpus) {
  return neighbors(u, kind, corpus.graph());
}

void write_posts(std::ostream& out, const Corpus& corpus, bool with_gold) {
  const auto& graph = corpus.graph();
  const auto& vocab = corpus.vocabulary();
  for (const auto& p : corpus.posts()) {
    out << p.id << '\t' << graph.user(p.user).label << '\t' << p.timestamp << '\t';
    for (std::size_t i = 0; i < p.tokens.size(); ++i) {
      if (i) out << ' ';
      out << (p.tokens[i] == kOovToken ? std::string(kOovWord) : vocab.word(p.tokens[i]));
    }
    if (with_gold && p.gold) out << '\t' << *p.gold;
    out << '\n';
  }
}

void write_users(std::ostream& out, const UserGraph& graph) {
  for (const auto& u : graph.users()) {
    out << u.label << '\t' << graph.region_labels()[u.region] << '\t';
    for (std::size_t i = 0; i < u.followees.size(); ++i) {
      if (i) out << ',';
      out << graph.user(u.followees[i]).label;
    }
    out << '\n';
  }
}

}  // namespace relcrp
