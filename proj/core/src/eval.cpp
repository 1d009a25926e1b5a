#include "relcrp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "relcrp/model.hpp"
#include "relcrp/random.hpp"

namespace relcrp {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double entropy(const std::map<std::int64_t, std::size_t>& counts, double n) {
  double h = 0.0;
  for (const auto& [label, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double pairs(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n > 0 ? n - 1 : 0); }

void normalize_columns(TrendMatrix& m) {
  m.masked.assign(m.columns.size(), false);
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    double total = 0.0;
    for (const auto& row : m.values) total += row[c];
    if (total <= 0.0) {
      m.masked[c] = true;
      for (auto& row : m.values) row[c] = 0.0;
      continue;
    }
    for (auto& row : m.values) row[c] /= total;
  }
  m.normalized = true;
}

TrendMatrix factor_matrix(const std::vector<EpochSummary>& epochs) {
  TrendMatrix m;
  for (auto r : kAllRelationships) m.rows.emplace_back(to_string(r));
  for (const auto& s : epochs) m.columns.push_back(s.epoch);
  m.values.assign(kRelationshipCount, std::vector<double>(epochs.size(), 0.0));
  return m;
}

double day_of(const Post& p) { return static_cast<double>(p.timestamp) / 86400.0; }

}  // namespace

// ------------------------------------------------------------------ perplexity

double PerplexityReport::log_likelihood() const {
  double total = 0.0;
  for (double x : post_log_likelihood) total += x;
  return total;
}

nlohmann::json PerplexityReport::to_json() const {
  return {{"perplexity", perplexity},
          {"posts", post_log_likelihood.size()},
          {"words", words},
          {"log_likelihood", log_likelihood()}};
}

double heldout_log_likelihood(const Post& post, const ModelState& state) {
  const auto& hyper = state.hyper();
  const std::size_t V = state.vocab_size();
  const double log_uniform = -std::log(static_cast<double>(V));
  const double n_tokens = static_cast<double>(post.tokens.size());
  const auto ids = state.live_topics();

  // Word likelihood of the post under each live topic, shared by all factors.
  std::vector<double> word_ll(ids.size(), 0.0);
  for (std::size_t s = 0; s < ids.size(); ++s) {
    const auto& row = state.ledger().row(s);
    const DecayedTopic* d = hyper.dynamic ? state.caches().find(ids[s]) : nullptr;
    double denom = static_cast<double>(row.words) + static_cast<double>(V) * hyper.beta;
    if (d) denom += d->words;
    const double log_denom = std::log(denom);
    double ll = 0.0;
    for (VocabId v : post.tokens) {
      if (v >= V) {
        ll += log_uniform;
        continue;
      }
      double num = row.by_word[v] + hyper.beta;
      if (d) num += d->by_word[v];
      ll += std::log(num) - log_denom;
    }
    word_ll[s] = ll;
  }

  const auto pi = state.personality(post.user);
  std::vector<double> per_factor;
  std::vector<double> weight;
  for (auto f : hyper.factors.members()) {
    std::vector<double> terms;
    terms.reserve(ids.size() + 1);
    double total_mass = hyper.alpha_new;
    std::vector<double> masses(ids.size());
    for (std::size_t s = 0; s < ids.size(); ++s) {
      masses[s] = neighbor_mass(state, s, post.user, f);
      total_mass += masses[s];
    }
    const double log_norm = std::log(total_mass);
    for (std::size_t s = 0; s < ids.size(); ++s)
      if (masses[s] > 0.0) terms.push_back(std::log(masses[s]) - log_norm + word_ll[s]);
    terms.push_back(std::log(hyper.alpha_new) - log_norm + n_tokens * log_uniform);
    per_factor.push_back(log_sum_exp(terms));
    weight.push_back(pi[index_of(f)]);
  }

  double m = kNegInf;
  for (double x : per_factor) m = std::max(m, x);
  double s = 0.0;
  for (std::size_t i = 0; i < per_factor.size(); ++i) s += weight[i] * std::exp(per_factor[i] - m);
  return m + std::log(s);
}

PerplexityReport perplexity(const ModelState& state, const Corpus& heldout) {
  if (heldout.empty()) throw Error("perplexity needs a non-empty held-out set");
  PerplexityReport report;
  report.post_log_likelihood.reserve(heldout.size());
  double total = 0.0;
  for (const auto& post : heldout.posts()) {
    if (post.user >= state.graph().user_count()) throw Error("held-out post by a user unknown to the model");
    const double ll = heldout_log_likelihood(post, state);
    report.post_log_likelihood.push_back(ll);
    total += ll;
    report.words += post.tokens.size();
  }
  report.perplexity = std::exp(-total / static_cast<double>(report.words));
  return report;
}

// ------------------------------------------------------------------ clustering

nlohmann::json ClusteringScores::to_json() const {
  return {{"nmi", nmi}, {"rand_index", rand_index}, {"pairwise_f1", pairwise_f1}};
}

ClusteringScores clustering_scores(std::span<const std::int64_t> pred, std::span<const std::int64_t> gold) {
  if (pred.size() != gold.size()) throw Error("clustering labelings differ in length");
  if (pred.size() < 2) throw Error("clustering scores need at least two items");
  const double n = static_cast<double>(pred.size());
  std::map<std::int64_t, std::size_t> a, b;
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> joint;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++a[pred[i]];
    ++b[gold[i]];
    ++joint[{pred[i], gold[i]}];
  }

  ClusteringScores s;
  const double ha = entropy(a, n), hb = entropy(b, n);
  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    const double pij = static_cast<double>(c) / n;
    const double pi = static_cast<double>(a[key.first]) / n, pj = static_cast<double>(b[key.second]) / n;
    mi += pij * std::log(pij / (pi * pj));
  }
  if (ha + hb == 0.0)
    s.nmi = 1.0;
  else
    s.nmi = std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);

  double same_both = 0.0, same_pred = 0.0, same_gold = 0.0;
  for (const auto& [key, c] : joint) same_both += pairs(c);
  for (const auto& [label, c] : a) same_pred += pairs(c);
  for (const auto& [label, c] : b) same_gold += pairs(c);
  const double total = pairs(pred.size());
  s.rand_index = (total + 2.0 * same_both - same_pred - same_gold) / total;

  if (same_pred == 0.0 && same_gold == 0.0) {
    s.pairwise_f1 = 1.0;
  } else if (same_both == 0.0) {
    s.pairwise_f1 = 0.0;
  } else {
    const double precision = same_both / same_pred, recall = same_both / same_gold;
    s.pairwise_f1 = 2.0 * precision * recall / (precision + recall);
  }
  return s;
}

// ---------------------------------------------------------------------- trends

std::vector<double> TrendMatrix::column(std::size_t c) const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& row : values) out.push_back(row[c]);
  return out;
}

std::string TrendMatrix::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(17) << "row";
  for (auto c : columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r];
    for (double v : values[r]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

nlohmann::json TrendMatrix::to_json() const {
  return {{"rows", rows}, {"columns", columns}, {"values", values}, {"masked", masked}, {"normalized", normalized}};
}

std::vector<EpochSummary> epoch_summaries(const ModelState& state) {
  std::vector<EpochSummary> out(state.archive().begin(), state.archive().end());
  out.push_back(state.current_summary());
  return out;
}

TrendMatrix topic_trends(const ModelState& state, std::span<const UserId> users) {
  if (users.empty()) throw Error("topic trends need at least one user");
  for (UserId u : users)
    if (u >= state.graph().user_count()) throw Error("unknown user id " + std::to_string(u));
  const auto epochs = epoch_summaries(state);
  std::set<TopicId> ids;
  for (const auto& s : epochs)
    for (const auto& [id, counts] : s.topic_user) ids.insert(id);

  TrendMatrix m;
  std::map<TopicId, std::size_t> row_of;
  for (TopicId id : ids) {
    row_of.emplace(id, m.rows.size());
    m.rows.push_back(std::to_string(id));
  }
  for (const auto& s : epochs) m.columns.push_back(s.epoch);
  m.values.assign(ids.size(), std::vector<double>(epochs.size(), 0.0));
  for (std::size_t c = 0; c < epochs.size(); ++c)
    for (const auto& [id, counts] : epochs[c].topic_user)
      for (UserId u : users) m.values[row_of[id]][c] += counts[u];
  normalize_columns(m);
  return m;
}

TrendMatrix personality_trends(const ModelState& state, std::span<const UserId> users) {
  if (users.empty()) throw Error("personality trends need at least one user");
  for (UserId u : users)
    if (u >= state.graph().user_count()) throw Error("unknown user id " + std::to_string(u));
  const auto epochs = epoch_summaries(state);
  TrendMatrix m = factor_matrix(epochs);
  for (std::size_t c = 0; c < epochs.size(); ++c)
    for (UserId u : users)
      for (std::size_t f = 0; f < kRelationshipCount; ++f)
        m.values[f][c] += static_cast<double>(epochs[c].user_factor[u][f]);
  normalize_columns(m);
  return m;
}

TrendMatrix topic_character(const ModelState& state, TopicId k) {
  const auto epochs = epoch_summaries(state);
  TrendMatrix m = factor_matrix(epochs);
  for (std::size_t c = 0; c < epochs.size(); ++c) {
    auto it = epochs[c].topic_factor.find(k);
    if (it == epochs[c].topic_factor.end()) continue;
    for (std::size_t f = 0; f < kRelationshipCount; ++f) m.values[f][c] = static_cast<double>(it->second[f]);
  }
  normalize_columns(m);
  return m;
}

std::vector<MajorEvent> detect_major_events(const TrendMatrix& trends, double threshold) {
  std::vector<MajorEvent> out;
  for (std::size_t c = 0; c < trends.columns.size(); ++c) {
    if (!trends.masked.empty() && trends.masked[c]) continue;
    std::size_t best = 0;
    double top = -1.0, second = 0.0;
    for (std::size_t r = 0; r < trends.rows.size(); ++r) {
      const double v = trends.values[r][c];
      if (v > top) {
        second = std::max(second, top);
        top = v;
        best = r;
      } else {
        second = std::max(second, v);
      }
    }
    if (top >= threshold && top >= 2.0 * second && top > 0.0)
      out.push_back(MajorEvent{best, trends.rows[best], trends.columns[c], top});
  }
  return out;
}

// ------------------------------------------------------------------ prediction

double topic_kl(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("topic_kl: distributions differ in length");
  double kl = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= 0.0) continue;
    if (b[i] <= 0.0) throw Error("topic_kl: second distribution has a zero where the first does not");
    kl += a[i] * std::log(a[i] / b[i]);
  }
  return std::max(kl, 0.0);
}

std::int64_t knn_predict(const FeatureRecord& query, std::span<const FeatureRecord> training, std::size_t k) {
  if (k == 0) throw Error("k must be at least 1");
  if (training.empty()) throw Error("k-NN needs at least one training record");
  const std::size_t n = training.size();
  std::vector<double> kl(n), days(n), inter(n);
  for (std::size_t i = 0; i < n; ++i) {
    kl[i] = topic_kl(query.topic, training[i].topic);
    days[i] = std::abs(query.day - training[i].day);
    inter[i] = std::abs(query.interactions - training[i].interactions);
  }
  auto scale = [](std::vector<double> v) {
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double median = *mid;
    if (v.size() % 2 == 0) median = 0.5 * (median + *std::max_element(v.begin(), mid));
    return median > 0.0 ? median : 1.0;
  };
  const double s_kl = scale(kl), s_day = scale(days), s_int = scale(inter);

  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = {kl[i] / s_kl + days[i] / s_day + inter[i] / s_int, i};
  const std::size_t kk = std::min(k, n);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());

  std::map<std::int64_t, std::size_t> votes;
  for (std::size_t i = 0; i < kk; ++i) ++votes[training[dist[i].second].label];
  std::int64_t best = 0;
  std::size_t best_votes = 0;
  for (const auto& [label, v] : votes)
    if (v > best_votes) {
      best = label;
      best_votes = v;
    }
  return best;
}

std::unordered_map<TopicId, std::vector<double>> topic_word_table(const Corpus& corpus,
                                                                  std::span<const Assignment> assignments,
                                                                  double beta) {
  if (assignments.size() != corpus.size()) throw Error("one assignment per post is required");
  const std::size_t V = corpus.vocab_size();
  std::unordered_map<TopicId, std::vector<double>> counts;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& row = counts[assignments[i].topic];
    if (row.empty()) row.assign(V, 0.0);
    for (VocabId v : corpus.post(i).tokens)
      if (v < V) row[v] += 1.0;
  }
  for (auto& [id, row] : counts) {
    double total = 0.0;
    for (double c : row) total += c;
    const double denom = total + static_cast<double>(V) * beta;
    for (double& c : row) c = (c + beta) / denom;
  }
  return counts;
}

nlohmann::json PredictionReport::to_json() const {
  return {{"task", task}, {"queries", queries}, {"correct", correct}, {"accuracy", accuracy}};
}

PredictionReport authorship_prediction(const Corpus& corpus, std::span<const Assignment> assignments,
                                       const PredictionConfig& config) {
  const auto phi = topic_word_table(corpus, assignments, config.beta);
  Rng rng(config.seed);
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (corpus.post(i).epoch < config.test_epoch ? train : test).push_back(i);
  if (train.empty() || test.empty()) throw Error("authorship prediction needs both training and test posts");

  std::vector<std::vector<std::size_t>> by_user(corpus.user_count());
  for (std::size_t i : train) by_user[corpus.post(i).user].push_back(i);
  std::vector<UserId> active;
  for (UserId u = 0; u < by_user.size(); ++u)
    if (!by_user[u].empty()) active.push_back(u);
  if (active.size() < 2) throw Error("authorship prediction needs at least two users with training posts");

  auto record = [&](std::size_t i, std::int64_t label) {
    return FeatureRecord{phi.at(assignments[i].topic), day_of(corpus.post(i)), 0.0, label};
  };
  std::map<UserId, std::vector<FeatureRecord>> training;
  auto training_for = [&](UserId u) -> const std::vector<FeatureRecord>& {
    auto it = training.find(u);
    if (it != training.end()) return it->second;
    std::vector<FeatureRecord> records;
    for (std::size_t i : by_user[u]) records.push_back(record(i, 1));
    std::size_t negatives = 0;
    for (std::size_t tries = 0; negatives < by_user[u].size() && tries < 20 * train.size(); ++tries) {
      const std::size_t i = train[rng() % train.size()];
      if (corpus.post(i).user == u) continue;
      records.push_back(record(i, 0));
      ++negatives;
    }
    return training.emplace(u, std::move(records)).first->second;
  };

  PredictionReport report;
  report.task = "authorship";
  std::vector<std::size_t> order = test;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i : order) {
    if (report.queries + 2 > config.max_queries) break;
    const UserId author = corpus.post(i).user;
    if (by_user[author].empty()) continue;
    UserId other = author;
    while (other == author) other = active[rng() % active.size()];
    for (auto [u, truth] : {std::pair{author, std::int64_t{1}}, std::pair{other, std::int64_t{0}}}) {
      const auto guess = knn_predict(record(i, truth), training_for(u), config.k);
      ++report.queries;
      report.correct += guess == truth ? 1 : 0;
    }
  }
  if (report.queries == 0) throw Error("no authorship queries could be formed");
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.queries);
  return report;
}

std::vector<Comment> read_comments(std::istream& in, const Corpus& corpus) {
  std::unordered_map<PostId, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus.post(i).id, i);
  std::vector<Comment> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("comments line " + std::to_string(lineno) + ": expected 2 fields");
    PostId id = 0;
    try {
      std::size_t used = 0;
      id = std::stoll(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error("comments line " + std::to_string(lineno) + ": bad post id");
    }
    auto post = index.find(id);
    if (post == index.end()) throw Error("comments line " + std::to_string(lineno) + ": unknown post " + std::to_string(id));
    auto user = corpus.graph().find(line.substr(tab + 1));
    if (!user) throw Error("comments line " + std::to_string(lineno) + ": unknown user");
    out.push_back(Comment{post->second, *user});
  }
  return out;
}

PredictionReport commenting_prediction(const Corpus& corpus, std::span<const Assignment> assignments,
                                       std::span<const Comment> comments, const PredictionConfig& config) {
  const auto phi = topic_word_table(corpus, assignments, config.beta);
  Rng rng(config.seed);
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (corpus.post(i).epoch < config.test_epoch ? train : test).push_back(i);
  if (train.empty() || test.empty()) throw Error("commenting prediction needs both training and test posts");

  std::set<std::pair<std::size_t, UserId>> commented;
  for (const auto& c : comments) commented.emplace(c.post, c.user);

  // Comments between u and v strictly before time t.
  auto interactions = [&](UserId u, UserId v, std::int64_t t) {
    double n = 0.0;
    for (const auto& c : comments) {
      const Post& p = corpus.post(c.post);
      if (p.timestamp >= t) continue;
      if ((c.user == u && p.user == v) || (c.user == v && p.user == u)) n += 1.0;
    }
    return n;
  };
  auto record = [&](std::size_t i, UserId u, std::int64_t label) {
    const Post& p = corpus.post(i);
    return FeatureRecord{phi.at(assignments[i].topic), day_of(p), interactions(u, p.user, p.timestamp), label};
  };

  std::map<UserId, std::vector<FeatureRecord>> training;
  auto training_for = [&](UserId u) -> const std::vector<FeatureRecord>& {
    auto it = training.find(u);
    if (it != training.end()) return it->second;
    std::vector<FeatureRecord> records;
    for (std::size_t i : train)
      if (commented.contains({i, u})) records.push_back(record(i, u, 1));
    const std::size_t positives = records.size();
    std::size_t negatives = 0;
    for (std::size_t tries = 0; negatives < positives && tries < 20 * train.size(); ++tries) {
      const std::size_t i = train[rng() % train.size()];
      if (corpus.post(i).user == u || commented.contains({i, u})) continue;
      records.push_back(record(i, u, 0));
      ++negatives;
    }
    return training.emplace(u, std::move(records)).first->second;
  };

  PredictionReport report;
  report.task = "commenting";
  std::vector<Comment> queries;
  for (const auto& c : comments)
    if (corpus.post(c.post).epoch >= config.test_epoch) queries.push_back(c);
  std::shuffle(queries.begin(), queries.end(), rng);
  for (const auto& c : queries) {
    if (report.queries + 2 > config.max_queries) break;
    const auto& records = training_for(c.user);
    if (records.empty()) continue;
    std::size_t negative = test.size();
    for (std::size_t tries = 0; tries < 20 * test.size(); ++tries) {
      const std::size_t i = test[rng() % test.size()];
      if (corpus.post(i).user != c.user && !commented.contains({i, c.user})) {
        negative = i;
        break;
      }
    }
    if (negative == test.size()) continue;
    for (auto [i, truth] : {std::pair{c.post, std::int64_t{1}}, std::pair{negative, std::int64_t{0}}}) {
      const auto guess = knn_predict(record(i, c.user, truth), records, config.k);
      ++report.queries;
      report.correct += guess == truth ? 1 : 0;
    }
  }
  if (report.queries == 0) throw Error("no commenting queries could be formed");
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.queries);
  return report;
}

}  // namespace relcrp
