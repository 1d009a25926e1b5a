#include "relcrp/types.hpp"

#include <algorithm>
#include <bit>
#include <cctype>

namespace relcrp {

std::string_view to_string(Relationship r) {
  switch (r) {
    case Relationship::World:
      return "world";
    case Relationship::SelfPref:
      return "self";
    case Relationship::Network:
      return "network";
    case Relationship::Geography:
      return "geography";
  }
  return "unknown";
}

std::optional<Relationship> parse_relationship(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "w" || s == "world") return Relationship::World;
  if (s == "u" || s == "self" || s == "selfpref" || s == "user") return Relationship::SelfPref;
  if (s == "n" || s == "network" || s == "friends") return Relationship::Network;
  if (s == "g" || s == "geo" || s == "geography") return Relationship::Geography;
  return std::nullopt;
}

Relationship require_relationship(std::string_view text) {
  auto r = parse_relationship(text);
  if (!r) throw Error("unknown relationship '" + std::string(text) + "'");
  return *r;
}

FactorSet FactorSet::parse(std::string_view text) {
  FactorSet set;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    auto item = text.substr(start, comma - start);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
    if (!item.empty()) {
      auto r = parse_relationship(item);
      if (!r) throw Error("unknown relationship '" + std::string(item) + "'");
      set.insert(*r);
    }
    start = comma + 1;
  }
  if (set.empty()) throw Error("factor list '" + std::string(text) + "' is empty");
  return set;
}

std::size_t FactorSet::size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<Relationship> FactorSet::members() const {
  std::vector<Relationship> out;
  for (auto r : kAllRelationships)
    if (contains(r)) out.push_back(r);
  return out;
}

std::string FactorSet::to_string() const {
  std::string out;
  for (auto r : members()) {
    if (!out.empty()) out += ',';
    out += relcrp::to_string(r);
  }
  return out;
}

}  // namespace relcrp
