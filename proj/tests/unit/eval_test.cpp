#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "relcrp/eval.hpp"
#include "relcrp/generator.hpp"
#include "relcrp/sampler.hpp"
#include "test_support.hpp"

namespace relcrp {
namespace {

using testing::make_post;

// Independent nMI: mutual information over the arithmetic mean of entropies.
double nmi_oracle(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  const double n = static_cast<double>(a.size());
  std::map<std::int64_t, double> pa, pb;
  std::map<std::pair<std::int64_t, std::int64_t>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1 / n;
    pb[b[i]] += 1 / n;
    pab[{a[i], b[i]}] += 1 / n;
  }
  double ha = 0, hb = 0, mi = 0;
  for (auto [k, p] : pa) ha -= p * std::log(p);
  for (auto [k, p] : pb) hb -= p * std::log(p);
  for (auto [kk, p] : pab) mi += p * std::log(p / (pa[kk.first] * pb[kk.second]));
  return mi / ((ha + hb) / 2);
}

TEST(Clustering, IdenticalIsPerfect) {
  const std::vector<std::int64_t> x{3, 3, 1, 2, 2, 2};
  auto s = clustering_scores(x, x);
  EXPECT_DOUBLE_EQ(s.nmi, 1.0);
  EXPECT_DOUBLE_EQ(s.rand_index, 1.0);
  EXPECT_DOUBLE_EQ(s.pairwise_f1, 1.0);
}

TEST(Clustering, RandByPairEnumeration) {
  const std::vector<std::int64_t> pred{1, 1, 1, 2}, gold{1, 1, 2, 2};
  auto s = clustering_scores(pred, gold);
  EXPECT_DOUBLE_EQ(s.rand_index, 0.5);
  // Pairs together in pred: 3, in gold: 2, in both: 1.
  EXPECT_NEAR(s.pairwise_f1, 2 * (1.0 / 3) * 0.5 / (1.0 / 3 + 0.5), 1e-12);
}

TEST(Clustering, PermutationInvariant) {
  const std::vector<std::int64_t> gold{0, 0, 1, 1, 2, 2, 2};
  const std::vector<std::int64_t> pred{7, 7, 5, 5, 9, 9, 9};
  auto s = clustering_scores(pred, gold);
  EXPECT_NEAR(s.nmi, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.rand_index, 1.0);
  EXPECT_DOUBLE_EQ(s.pairwise_f1, 1.0);
}

TEST(Clustering, NmiMatchesOracleOnRandomLabels) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::int64_t> a(200), b(200);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<std::int64_t>(rng() % 5);
      b[i] = uniform01(rng) < 0.6 ? a[i] : static_cast<std::int64_t>(rng() % 7);
    }
    EXPECT_NEAR(clustering_scores(a, b).nmi, nmi_oracle(a, b), 1e-12);
  }
}

TEST(Clustering, Errors) {
  EXPECT_THROW(clustering_scores(std::vector<std::int64_t>{1, 2}, std::vector<std::int64_t>{1}), Error);
  EXPECT_THROW(clustering_scores(std::vector<std::int64_t>{1}, std::vector<std::int64_t>{1}), Error);
}

TEST(Perplexity, UntrainedModelScoresV) {
  ModelState state(Hyperparams{}, testing::flat_graph(3), 100);
  Vocabulary vocab;
  for (int v = 0; v < 100; ++v) vocab.add("w" + std::to_string(v));
  Corpus held(testing::flat_graph(3), vocab, {make_post(0, 0, {1, 2, 3}), make_post(1, 2, {50, 99})}, 0, 1);
  EXPECT_NEAR(perplexity(state, held).perplexity, 100.0, 1e-12);
}

TEST(Perplexity, OovTokensScoreUniform) {
  ModelState state(Hyperparams{}, testing::flat_graph(1), 4);
  const TopicId k = state.spawn_topic();
  for (int i = 0; i < 10; ++i) state.apply(make_post(i, 0, {0}), k, Relationship::World);
  const double with = heldout_log_likelihood(make_post(0, 0, {0, kOovToken}), state);
  const double without = heldout_log_likelihood(make_post(0, 0, {0}), state);
  // log sum_f pi_f sum_k P(k|f) phi_k(0) * (1/4): the OOV factor is the same under every topic.
  EXPECT_NEAR(with - without, std::log(0.25), 1e-12);
}

TEST(Perplexity, ApproachesOneOnADegenerateCorpus) {
  Hyperparams h;
  h.beta = 1e-6;
  h.alpha_new = 1e-6;
  h.factors = FactorSet::only(Relationship::World);
  ModelState state(h, testing::flat_graph(1), 2);
  const TopicId k = state.spawn_topic();
  for (int i = 0; i < 50; ++i) state.apply(make_post(i, 0, {0, 0}), k, Relationship::World);
  Vocabulary vocab;
  vocab.add("a");
  vocab.add("b");
  Corpus held(testing::flat_graph(1), vocab, {make_post(0, 0, {0, 0, 0})}, 0, 1);
  EXPECT_NEAR(perplexity(state, held).perplexity, 1.0, 1e-4);
}

TEST(Perplexity, OrderInvariant) {
  GenConfig config;
  config.users = 6;
  config.epochs = 1;
  config.posts_per_epoch = 120;
  config.vocab = 30;
  Rng rng(2);
  auto g = generate(config, rng);
  auto split = split_heldout(g.corpus, 0.25);
  FitOptions options;
  options.sweeps = 5;
  auto r = fit_sequential(split.train, Hyperparams{}, options);
  std::vector<Post> reversed(split.heldout.posts().rbegin(), split.heldout.posts().rend());
  Corpus flipped(split.heldout.shared_graph(), split.heldout.vocabulary(), reversed, split.heldout.origin(),
                 split.heldout.epoch_length(), true);
  EXPECT_NEAR(perplexity(r.state, split.heldout).perplexity, perplexity(r.state, flipped).perplexity, 1e-9);
}

TEST(Perplexity, EmptyHeldoutIsAnError) {
  ModelState state(Hyperparams{}, testing::flat_graph(1), 2);
  EXPECT_THROW(perplexity(state, Corpus{}), Error);
}

class TrendTest : public ::testing::Test {
 protected:
  std::shared_ptr<const UserGraph> graph = testing::flat_graph(3);
};

TEST_F(TrendTest, SingleTopic) {
  ModelState state(Hyperparams{}, graph, 2);
  const TopicId k = state.spawn_topic();
  state.apply(make_post(0, 0, {0}), k, Relationship::World);
  const std::vector<UserId> users{0, 1};
  auto m = topic_trends(state, users);
  ASSERT_EQ(m.rows.size(), 1u);
  EXPECT_EQ(m.column(0), (std::vector<double>{1.0}));
  EXPECT_THROW(topic_trends(state, std::vector<UserId>{}), Error);
}

TEST_F(TrendTest, UniformUsageOverTwoTopics) {
  ModelState state(Hyperparams{}, graph, 2);
  const TopicId a = state.spawn_topic(), b = state.spawn_topic();
  for (int epoch = 0; epoch < 2; ++epoch) {
    state.apply(make_post(0, 0, {0}), a, Relationship::World);
    state.apply(make_post(1, 1, {1}), b, Relationship::SelfPref);
    state.advance_epoch();
  }
  const std::vector<UserId> users{0, 1, 2};
  auto m = topic_trends(state, users);
  EXPECT_EQ(m.column(0), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(m.column(1), (std::vector<double>{0.5, 0.5}));
  // The open epoch has no posts.
  EXPECT_TRUE(m.masked[2]);
  EXPECT_EQ(m.column(2), (std::vector<double>{0.0, 0.0}));
}

TEST_F(TrendTest, PersonalityOfSelfOnlyModel) {
  Hyperparams h;
  h.factors = FactorSet::only(Relationship::SelfPref);
  GenConfig config;
  config.hyper = h;
  config.users = 5;
  config.epochs = 2;
  config.posts_per_epoch = 50;
  config.vocab = 20;
  Rng rng(3);
  auto g = generate(config, rng);
  FitOptions options;
  options.sweeps = 2;
  auto r = fit_sequential(g.corpus, h, options);
  const std::vector<UserId> users{0, 1, 2, 3, 4};
  auto m = personality_trends(r.state, users);
  for (std::size_t c = 0; c < m.columns.size(); ++c) EXPECT_EQ(m.at(index_of(Relationship::SelfPref), c), 1.0);
}

TEST_F(TrendTest, OnePostWithWorld) {
  ModelState state(Hyperparams{}, graph, 2);
  state.apply(make_post(0, 2, {0}), state.spawn_topic(), Relationship::World);
  const std::vector<UserId> users{2};
  auto m = personality_trends(state, users);
  EXPECT_EQ(m.column(0), (std::vector<double>{1, 0, 0, 0}));
}

TEST_F(TrendTest, SymmetricGeneratorGivesQuarterShares) {
  GenConfig config;
  config.hyper.alpha = {50, 50, 50, 50};
  config.users = 20;
  config.epochs = 1;
  config.posts_per_epoch = 4000;
  config.vocab = 50;
  Rng rng(4);
  auto g = generate(config, rng);
  // Tally the generator's own labels through a state, then read the trends.
  ModelState state(config.hyper, g.corpus.shared_graph(), g.corpus.vocab_size());
  std::map<TopicId, TopicId> ids;
  for (std::size_t i = 0; i < g.corpus.size(); ++i) {
    auto [it, fresh] = ids.emplace(g.truth.assignments[i].topic, 0);
    if (fresh) it->second = state.spawn_topic();
    state.apply(g.corpus.post(i), it->second, g.truth.assignments[i].factor);
  }
  std::vector<UserId> users(20);
  for (UserId u = 0; u < 20; ++u) users[u] = u;
  auto m = personality_trends(state, users);
  const double n = 4000, sigma = std::sqrt(0.25 * 0.75 / n);
  // pi_u is itself random around 1/4, so allow for its spread as well as the multinomial noise.
  for (std::size_t f = 0; f < 4; ++f) EXPECT_NEAR(m.at(f, 0), 0.25, 3 * sigma + 0.03);
}

TEST_F(TrendTest, TopicCharacterColumns) {
  ModelState state(Hyperparams{}, graph, 2);
  const TopicId k = state.spawn_topic(), other = state.spawn_topic();
  state.apply(make_post(0, 0, {0}), k, Relationship::World);
  state.apply(make_post(1, 1, {0}), k, Relationship::World);
  state.apply(make_post(2, 1, {1}), other, Relationship::SelfPref);
  state.advance_epoch();
  state.apply(make_post(3, 1, {1}), other, Relationship::SelfPref);
  auto m = topic_character(state, k);
  EXPECT_EQ(m.column(0), (std::vector<double>{1, 0, 0, 0}));
  EXPECT_TRUE(m.masked[1]);
  EXPECT_EQ(m.column(1), (std::vector<double>{0, 0, 0, 0}));
}

TEST_F(TrendTest, TopicCharacterMatchesAssignmentLog) {
  GenConfig config;
  config.users = 8;
  config.epochs = 3;
  config.posts_per_epoch = 150;
  config.vocab = 30;
  Rng rng(5);
  auto g = generate(config, rng);
  FitOptions options;
  options.sweeps = 3;
  auto r = fit_sequential(g.corpus, Hyperparams{}, options);
  std::map<TopicId, std::vector<std::array<double, 4>>> log;
  for (std::size_t i = 0; i < g.corpus.size(); ++i) {
    auto& rows = log[r.assignments[i].topic];
    rows.resize(3);
    rows[g.corpus.post(i).epoch][index_of(r.assignments[i].factor)] += 1;
  }
  for (const auto& [k, rows] : log) {
    auto m = topic_character(r.state, k);
    for (std::size_t t = 0; t < 3; ++t) {
      double total = rows[t][0] + rows[t][1] + rows[t][2] + rows[t][3];
      for (std::size_t f = 0; f < 4; ++f)
        EXPECT_NEAR(m.at(f, t), total > 0 ? rows[t][f] / total : 0.0, 1e-12) << k << " " << t;
    }
  }
}

TEST_F(TrendTest, MatrixColumnsSumToOneAndExport) {
  ModelState state(Hyperparams{}, graph, 2);
  const TopicId a = state.spawn_topic(), b = state.spawn_topic();
  state.apply(make_post(0, 0, {0}), a, Relationship::World);
  state.apply(make_post(1, 0, {0}), b, Relationship::World);
  state.apply(make_post(2, 1, {0}), b, Relationship::World);
  const std::vector<UserId> users{0, 1};
  auto m = topic_trends(state, users);
  double s = 0;
  for (double x : m.column(0)) s += x;
  EXPECT_NEAR(s, 1.0, 1e-9);
  const auto csv = m.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "row,0");
  EXPECT_EQ(m.to_json()["rows"].size(), 2u);
}

TrendMatrix one_column(std::vector<double> col) {
  TrendMatrix m;
  for (std::size_t r = 0; r < col.size(); ++r) {
    m.rows.push_back("k" + std::to_string(r));
    m.values.push_back({col[r]});
  }
  m.columns = {0};
  m.masked = {false};
  return m;
}

TEST(MajorEvents, Rules) {
  auto flagged = detect_major_events(one_column({0.9, 0.05, 0.05}), 0.3);
  ASSERT_EQ(flagged.size(), 1u);
  EXPECT_EQ(flagged[0].label, "k0");
  EXPECT_TRUE(detect_major_events(one_column({0.34, 0.33, 0.33}), 0.3).empty());
  EXPECT_TRUE(detect_major_events(one_column({0.25, 0.25, 0.25, 0.25}), 0.1).empty());
  EXPECT_TRUE(detect_major_events(one_column({0.2, 0.05}), 0.3).empty());
}

TEST(TopicKl, Values) {
  const std::vector<double> p{0.9, 0.1}, q{0.5, 0.5};
  EXPECT_EQ(topic_kl(p, p), 0.0);
  EXPECT_NEAR(topic_kl(p, q), 0.9 * std::log(1.8) + 0.1 * std::log(0.2), 1e-15);
  EXPECT_NEAR(topic_kl(p, q), 0.3681, 1e-4);
  EXPECT_THROW(topic_kl(q, std::vector<double>{1.0, 0.0}), Error);
  EXPECT_NO_THROW(topic_kl(std::vector<double>{1.0, 0.0}, q));
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(5), b(5);
    double sa = 0, sb = 0;
    for (int j = 0; j < 5; ++j) {
      sa += a[j] = uniform01(rng) + 1e-3;
      sb += b[j] = uniform01(rng) + 1e-3;
    }
    for (int j = 0; j < 5; ++j) {
      a[j] /= sa;
      b[j] /= sb;
    }
    EXPECT_GE(topic_kl(a, b), 0.0);
  }
}

FeatureRecord rec(std::vector<double> topic, double day, std::int64_t label) {
  return FeatureRecord{std::move(topic), day, 0.0, label};
}

TEST(Knn, Votes) {
  std::vector<FeatureRecord> train{rec({0.9, 0.1}, 1, 4), rec({0.8, 0.2}, 2, 4), rec({0.85, 0.15}, 1, 4),
                                   rec({0.1, 0.9}, 30, 7), rec({0.2, 0.8}, 31, 7)};
  EXPECT_EQ(knn_predict(rec({0.88, 0.12}, 1, -1), train, 3), 4);
  EXPECT_EQ(knn_predict(train[3], train, 1), 7);
  // Two each: the smaller label wins.
  std::vector<FeatureRecord> tie{rec({0.5, 0.5}, 0, 9), rec({0.5, 0.5}, 0, 2)};
  EXPECT_EQ(knn_predict(rec({0.5, 0.5}, 0, 0), tie, 2), 2);
  EXPECT_THROW(knn_predict(train[0], train, 0), Error);
  EXPECT_THROW(knn_predict(train[0], std::span<const FeatureRecord>{}, 5), Error);
}

TEST(Prediction, HarnessesProduceAccuracies) {
  GenConfig config;
  config.users = 10;
  config.epochs = 3;
  config.posts_per_epoch = 100;
  config.vocab = 40;
  Rng rng(7);
  auto g = generate(config, rng);
  FitOptions options;
  options.sweeps = 3;
  auto r = fit_sequential(g.corpus, Hyperparams{}, options);
  PredictionConfig pc;
  pc.test_epoch = 2;
  pc.max_queries = 50;
  auto a = authorship_prediction(g.corpus, r.assignments, pc);
  EXPECT_EQ(a.task, "authorship");
  EXPECT_GT(a.queries, 0u);
  EXPECT_LE(a.queries, 100u);
  EXPECT_GE(a.accuracy, 0.0);
  EXPECT_LE(a.accuracy, 1.0);

  std::ostringstream comments;
  for (std::size_t i = 0; i < g.corpus.size(); i += 3)
    comments << g.corpus.post(i).id << "\tu" << (g.corpus.post(i).user + 1) % 10 << "\n";
  std::istringstream in(comments.str());
  auto parsed = read_comments(in, g.corpus);
  EXPECT_EQ(parsed.size(), (g.corpus.size() + 2) / 3);
  auto c = commenting_prediction(g.corpus, r.assignments, parsed, pc);
  EXPECT_GT(c.queries, 0u);
  EXPECT_GE(c.accuracy, 0.0);
  EXPECT_LE(c.accuracy, 1.0);
  std::istringstream bad("1\tnobody\n");
  EXPECT_THROW(read_comments(bad, g.corpus), Error);
}

TEST(TopicWordTable, SmoothedCounts) {
  Vocabulary vocab;
  vocab.add("a");
  vocab.add("b");
  Corpus c(testing::flat_graph(1), vocab, {make_post(0, 0, {0, 0}), make_post(1, 0, {1})}, 0, 1);
  const std::vector<Assignment> labels{{0, 5, Relationship::World}, {1, 6, Relationship::World}};
  auto t = topic_word_table(c, labels, 0.5);
  EXPECT_NEAR(t.at(5)[0], 2.5 / 3.0, 1e-15);
  EXPECT_NEAR(t.at(6)[0], 0.5 / 2.0, 1e-15);
}

}  // namespace
}  // namespace relcrp
