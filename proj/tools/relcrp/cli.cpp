#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "relcrp/checkpoint.hpp"
#include "relcrp/corpus.hpp"
#include "relcrp/eval.hpp"
#include "relcrp/generator.hpp"
#include "relcrp/parallel.hpp"
#include "relcrp/sampler.hpp"

namespace relcrp::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

// Bad flag values or inconsistent settings; reported with exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

struct HyperFlags {
  double alpha_w = 0.1, alpha_u = 0.1, alpha_n = 0.1, alpha_g = 0.1;
  double alpha_new = 0.1;
  double beta = 0.1;
  double lambda = 1.0;
  std::size_t delta = 3;
  std::string factors = "w,u,n,g";
  bool static_mode = false;

  void add(CLI::App* app) {
    app->add_option("--alpha-w", alpha_w, "Personality prior for the world relationship")->capture_default_str();
    app->add_option("--alpha-u", alpha_u, "Personality prior for self preference")->capture_default_str();
    app->add_option("--alpha-n", alpha_n, "Personality prior for the follow network")->capture_default_str();
    app->add_option("--alpha-g", alpha_g, "Personality prior for geography")->capture_default_str();
    app->add_option("--alpha-new", alpha_new, "Mass of the new-topic slot")->capture_default_str();
    app->add_option("--beta", beta, "Topic-word Dirichlet prior")->capture_default_str();
    app->add_option("--lambda", lambda, "Decay scale: history weight exp(-delta/lambda)")->capture_default_str();
    app->add_option("--delta", delta, "Number of past epochs kept in the decayed history")->capture_default_str();
    app->add_option("--factors", factors, "Enabled relationships, e.g. w,u,n,g or self,network")
        ->capture_default_str();
    app->add_flag("--static", static_mode, "Disable the decayed history (no epoch coupling)");
  }

  Hyperparams resolve() const {
    Hyperparams h;
    h.alpha = {alpha_w, alpha_u, alpha_n, alpha_g};
    h.alpha_new = alpha_new;
    h.beta = beta;
    h.lambda = lambda;
    h.delta_max = delta;
    h.dynamic = !static_mode;
    try {
      h.factors = FactorSet::parse(factors);
      h.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    return h;
  }
};

struct Common {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 1;
};

struct GenerateFlags {
  Common common;
  HyperFlags hyper;
  std::size_t users = 50, regions = 5;
  std::string region_scheme = "round_robin";
  double mean_degree = 5.0;
  std::size_t epochs = 3, posts_per_epoch = 2000;
  std::size_t min_tokens = 5, max_tokens = 15;
  std::size_t vocab = 500;
  std::size_t seed_topics = 0;
  std::string epoch_length = "15d";
};

struct FitFlags {
  Common common;
  HyperFlags hyper;
  std::string posts, users_file;
  std::string epoch_length = "15d";
  std::size_t batch = 35000, initial_batch = 0, sweeps = 100, workers = 7;
  std::string mode = "sequential";
  double heldout_fraction = 0.0;
  std::size_t checkpoint_every = 0;
  std::string resume;
};

struct EvalFlags {
  Common common;
  std::string run, heldout, truth;
  bool gold = false;
};

struct TrendsFlags {
  Common common;
  std::string run;
  std::string users;
  std::vector<TopicId> topics;
  double threshold = 0.3;
};

struct PredictFlags {
  Common common;
  std::string run, task = "authorship", comments;
  std::optional<EpochIndex> test_epoch;
  std::size_t k = 5, max_queries = 2000;
};

struct BenchFlags {
  Common common;
  HyperFlags hyper;
  std::string posts, users_file, epoch_length = "15d";
  std::size_t synthetic_posts = 100000, users = 200, vocab = 500, seed_topics = 20;
  std::vector<std::size_t> workers{1, 4};
  std::size_t batch = 5000, sweeps = 2;
};

void add_common(CLI::App* app, Common& c, bool seed = true) {
  app->add_option("--config", c.config_path, "JSON file of flag values (flags given on the command line win)");
  app->add_option("--out", c.out_dir, "Output directory");
  if (seed) app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

// Fills options not given on the command line from a JSON object whose keys
// are flag names without the leading dashes.
void apply_config(CLI::App* app, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "config") continue;
    CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (!opt) throw ConfigError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      if (value.is_array())
        for (const auto& v : value) opt->add_result(scalar_text(v));
      else
        opt->add_result(scalar_text(value));
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("relcrp", sink);
  logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
  auto level = spdlog::level::info;
  if (const char* env = std::getenv("RELCRP_LOG")) {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept it when asked for.
    if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
  }
  logger->set_level(level);
  return logger;
}

fs::path prepare_out(const std::string& out, const fs::path& fallback) {
  fs::path dir = out.empty() ? fallback : fs::path(out);
  if (dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw Error(path.string() + " is not valid JSON: " + e.what());
  }
}

std::ifstream open_input(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " is required");
  std::ifstream in(path);
  if (!in) throw Error(std::string("cannot open ") + what + " " + path);
  return in;
}

// Writes <prefix>config.json and <prefix>manifest.json.
void write_manifest(const fs::path& dir, const std::string& prefix, const std::string& command,
                    const std::vector<std::string>& args, const json& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs) {
  json files = json::array();
  for (const auto& path : inputs)
    if (!path.empty()) files.push_back({{"path", path}, {"sha1", git_blob_hash(path)}});
  write_json(dir / (prefix + "config.json"), config);
  write_json(dir / (prefix + "manifest.json"), {{"tool", "relcrp"},
                                     {"version", kVersion},
                                     {"command", command},
                                     {"args", args},
                                     {"seed", seed},
                                     {"config", config},
                                     {"inputs", files}});
}

std::string assignments_tsv(const Corpus& corpus, std::span<const Assignment> labels) {
  std::ostringstream out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << corpus.post(i).id << '\t' << labels[i].topic << '\t' << to_string(labels[i].factor) << '\n';
  return out.str();
}

std::vector<Assignment> read_assignments(const fs::path& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Assignment> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Assignment a;
    std::string factor;
    if (!(fields >> a.post_id >> a.topic >> factor))
      throw Error(path.string() + " line " + std::to_string(lineno) + ": expected post, topic, factor");
    a.factor = require_relationship(factor);
    out.push_back(a);
  }
  if (out.size() != corpus.size()) throw Error(path.string() + " does not match the training posts");
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].post_id != corpus.post(i).id) throw Error(path.string() + " is out of order with the training posts");
  return out;
}

// Everything `fit` leaves behind, re-read by eval/trends/predict.
struct Run {
  fs::path dir;
  json config;
  Corpus train;
  std::optional<Corpus> heldout;
  ModelState state;
  std::vector<Assignment> assignments;
};

Run load_run(const std::string& dir_text) {
  if (dir_text.empty()) throw ConfigError("--run is required");
  Run run;
  run.dir = dir_text;
  run.config = read_json(run.dir / "config.json");
  std::ifstream users(run.dir / "users.tsv");
  if (!users) throw Error("run directory " + dir_text + " has no users.tsv");
  auto graph = read_users(users);
  IngestConfig ingest;
  ingest.epoch_length = run.config.at("epoch_length").get<std::int64_t>();
  ingest.origin = run.config.at("origin").get<std::int64_t>();
  std::ifstream posts(run.dir / "train.tsv");
  if (!posts) throw Error("run directory " + dir_text + " has no train.tsv");
  run.train = ingest_posts(posts, graph, ingest);
  if (std::ifstream held(run.dir / "heldout.tsv"); held) run.heldout = ingest_heldout(held, run.train);
  run.state = load_checkpoint(run.dir / "model.json", graph).state;
  if (run.state.vocab_size() != run.train.vocab_size()) throw Error("model.json does not match train.tsv");
  run.assignments = read_assignments(run.dir / "assignments.tsv", run.train);
  return run;
}

// ------------------------------------------------------------------- generate

int cmd_generate(const GenerateFlags& f, const std::vector<std::string>& args, spdlog::logger& log,
                 std::ostream& out) {
  GenConfig config;
  config.users = f.users;
  config.regions = f.regions;
  if (f.region_scheme == "round_robin")
    config.region_scheme = RegionScheme::RoundRobin;
  else if (f.region_scheme == "random")
    config.region_scheme = RegionScheme::Random;
  else
    throw ConfigError("--region-scheme must be round_robin or random");
  config.mean_degree = f.mean_degree;
  config.epochs = f.epochs;
  config.posts_per_epoch = f.posts_per_epoch;
  config.min_tokens = f.min_tokens;
  config.max_tokens = f.max_tokens;
  config.vocab = f.vocab;
  config.epoch_length = parse_duration(f.epoch_length);
  config.hyper = f.hyper.resolve();
  try {
    if (f.seed_topics > 0) config.seed_topics = disjoint_block_topics(f.seed_topics, f.vocab);
    config.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = prepare_out(f.common.out_dir, {});

  Rng rng(f.common.seed);
  const auto start = std::chrono::steady_clock::now();
  Generated g = generate(config, rng);
  log.info("generated {} posts over {} epochs, {} topics used", g.corpus.size(), g.corpus.epoch_count(),
           g.truth.topics.empty() ? 0 : g.truth.topics.back().size());

  std::ostringstream posts, users;
  write_posts(posts, g.corpus);
  write_users(users, g.corpus.graph());
  write_text(dir / "posts.tsv", posts.str());
  write_text(dir / "users.tsv", users.str());
  write_json(dir / "truth.json", g.truth.to_json());

  json echo = {{"command", "generate"},
               {"users", f.users},
               {"regions", f.regions},
               {"region_scheme", f.region_scheme},
               {"mean_degree", f.mean_degree},
               {"epochs", f.epochs},
               {"posts_per_epoch", f.posts_per_epoch},
               {"min_tokens", f.min_tokens},
               {"max_tokens", f.max_tokens},
               {"vocab", f.vocab},
               {"seed_topics", f.seed_topics},
               {"epoch_length", config.epoch_length},
               {"hyper", hyperparams_to_json(config.hyper)},
               {"seed", f.common.seed}};
  write_manifest(dir, "", "generate", args, echo, f.common.seed, {f.common.config_path});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "wrote " << g.corpus.size() << " posts to " << (dir / "posts.tsv").string() << " in " << std::fixed
      << std::setprecision(2) << secs << "s\n";
  return kExitOk;
}

// ------------------------------------------------------------------------ fit

int cmd_fit(const FitFlags& f, const std::vector<std::string>& args, spdlog::logger& log, std::ostream& out) {
  const Hyperparams hyper = f.hyper.resolve();
  if (f.mode != "sequential" && f.mode != "parallel") throw ConfigError("--mode must be sequential or parallel");
  if (f.batch == 0) throw ConfigError("--batch must be positive");
  if (f.mode == "parallel" && (f.workers == 0 || f.batch < f.workers))
    throw ConfigError("parallel mode needs 1 <= --workers <= --batch");
  if (f.heldout_fraction < 0.0 || f.heldout_fraction >= 1.0) throw ConfigError("--heldout-fraction must be in [0, 1)");
  if (!f.resume.empty() && f.mode != "sequential") throw ConfigError("--resume is only supported in sequential mode");
  const std::int64_t epoch_length = parse_duration(f.epoch_length);

  auto users_in = open_input(f.users_file, "--users-file");
  auto posts_in = open_input(f.posts, "--posts");
  const fs::path dir = prepare_out(f.common.out_dir, {});

  IngestConfig ingest;
  ingest.epoch_length = epoch_length;
  Corpus corpus = ingest_posts(posts_in, users_in, ingest);
  if (corpus.empty()) throw Error("no usable posts in " + f.posts);
  std::optional<Corpus> heldout;
  if (f.heldout_fraction > 0.0) {
    auto split = split_heldout(corpus, f.heldout_fraction);
    corpus = std::move(split.train);
    heldout = std::move(split.heldout);
  }
  log.info("training on {} posts, {} users, vocabulary {}, {} epochs{}", corpus.size(), corpus.user_count(),
           corpus.vocab_size(), corpus.epoch_count(),
           heldout ? ", " + std::to_string(heldout->size()) + " held out" : std::string());

  {
    std::ostringstream posts, users;
    write_posts(posts, corpus);
    write_users(users, corpus.graph());
    write_text(dir / "train.tsv", posts.str());
    write_text(dir / "users.tsv", users.str());
    if (heldout) {
      std::ostringstream held;
      write_posts(held, *heldout);
      write_text(dir / "heldout.tsv", held.str());
    }
  }

  json echo = {{"command", "fit"},
               {"posts", f.posts},
               {"users_file", f.users_file},
               {"epoch_length", epoch_length},
               {"origin", corpus.origin()},
               {"hyper", hyperparams_to_json(hyper)},
               {"mode", f.mode},
               {"batch", f.batch},
               {"initial_batch", f.initial_batch == 0 ? f.batch : f.initial_batch},
               {"sweeps", f.sweeps},
               {"workers", f.mode == "parallel" ? f.workers : 1},
               {"heldout_fraction", f.heldout_fraction},
               {"checkpoint_every", f.checkpoint_every},
               {"seed", f.common.seed}};
  write_manifest(dir, "", "fit", args, echo, f.common.seed, {f.posts, f.users_file, f.common.config_path, f.resume});

  std::ofstream metrics(dir / "metrics.jsonl");
  const auto start = std::chrono::steady_clock::now();
  FitResult result;
  std::size_t batches = 0;
  std::string rng_state;
  if (f.mode == "sequential") {
    FitOptions options;
    options.batch_size = f.batch;
    options.sweeps = f.sweeps;
    options.seed = f.common.seed;
    options.checkpoint_every = f.checkpoint_every;
    options.checkpoint_path = dir / "checkpoint.json";
    options.on_batch = [&](const BatchProgress& p) {
      json line = {{"batch", p.batch_index},      {"epoch", p.epoch},
                   {"posts", p.batch_posts},      {"posts_done", p.posts_done},
                   {"live_topics", p.live_topics}, {"log_likelihood", p.log_likelihood},
                   {"seconds", p.seconds}};
      metrics << line.dump() << '\n';
      log.info("batch {} epoch {}: {} posts, {} live topics, log-lik {:.2f}, {:.2f}s", p.batch_index, p.epoch,
               p.batch_posts, p.live_topics, p.log_likelihood, p.seconds);
    };
    std::optional<SequentialFitter> fitter;
    if (!f.resume.empty()) {
      const Checkpoint cp = load_checkpoint(f.resume, corpus.shared_graph());
      if (cp.state.hyper() != hyper) throw ConfigError("--resume checkpoint was written with other hyperparameters");
      fitter.emplace(corpus, cp, options);
      log.info("resuming at batch {} of {}", fitter->batches_done(), fitter->batch_count());
    } else {
      fitter.emplace(corpus, hyper, options);
    }
    fitter->run();
    batches = fitter->batch_count();
    Checkpoint final_cp = fitter->checkpoint();
    rng_state = final_cp.rng_state;
    result = std::move(*fitter).finish();
  } else {
    ParallelOptions options;
    options.workers = f.workers;
    options.batch_size = f.batch;
    options.initial_batch_size = f.initial_batch;
    options.sweeps = f.sweeps;
    options.seed = f.common.seed;
    options.on_round = [&](const RoundMetrics& m) {
      metrics << m.to_json().dump() << '\n';
      log.info("round {} epoch {}: {} posts, {} new topics, {} flagged, workers {:.1f}ms merge {:.1f}ms "
               "resample {:.1f}ms",
               m.round, m.epoch, m.posts, m.provisional_topics, m.flagged_posts, m.worker_ms, m.merge_ms,
               m.resample_ms);
    };
    result = fit_parallel(corpus, hyper, options);
    batches = plan_batches(corpus, f.batch, f.initial_batch).size();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Checkpoint model;
  model.state = std::move(result.state);
  model.rng_state = rng_state;
  model.next_batch = batches;
  model.batch_size = f.batch;
  model.sweeps = f.sweeps;
  model.seed = f.common.seed;
  save_checkpoint(dir / "model.json", model);
  write_text(dir / "assignments.tsv", assignments_tsv(corpus, result.assignments));

  json summary = {{"posts", corpus.size()},
                  {"batches", batches},
                  {"seconds", secs},
                  {"live_topics", model.state.live_topics().size()}};
  if (heldout) summary["heldout"] = perplexity(model.state, *heldout).to_json();
  write_json(dir / "fit.json", summary);
  out << summary.dump(2) << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------------- eval

int cmd_eval(const EvalFlags& f, const std::vector<std::string>& args, spdlog::logger& log, std::ostream& out) {
  Run run = load_run(f.run);
  if (!f.heldout.empty()) {
    auto in = open_input(f.heldout, "--heldout");
    run.heldout = ingest_heldout(in, run.train);
  }
  if (!run.heldout && !f.gold && f.truth.empty())
    throw ConfigError("nothing to evaluate: give --heldout, --gold or --truth (or fit with --heldout-fraction)");
  const fs::path dir = prepare_out(f.common.out_dir, run.dir);

  json report = json::object();
  if (run.heldout) {
    report["perplexity"] = perplexity(run.state, *run.heldout).to_json();
    log.info("held-out perplexity {:.3f}", report["perplexity"]["perplexity"].get<double>());
  }
  if (f.gold) {
    std::vector<std::int64_t> pred, gold;
    for (std::size_t i = 0; i < run.train.size(); ++i) {
      if (!run.train.post(i).gold) continue;
      pred.push_back(static_cast<std::int64_t>(run.assignments[i].topic));
      gold.push_back(*run.train.post(i).gold);
    }
    if (pred.size() < 2) throw Error("training posts carry fewer than two gold labels");
    report["clustering"] = clustering_scores(pred, gold).to_json();
    report["clustering"]["labelled_posts"] = pred.size();
  }
  if (!f.truth.empty()) {
    const GroundTruth truth = GroundTruth::from_json(read_json(f.truth));
    std::unordered_map<PostId, Relationship> true_factor;
    for (const auto& a : truth.assignments) true_factor.emplace(a.post_id, a.factor);
    std::size_t matched = 0, correct = 0;
    for (const auto& a : run.assignments) {
      auto it = true_factor.find(a.post_id);
      if (it == true_factor.end()) continue;
      ++matched;
      correct += it->second == a.factor ? 1 : 0;
    }
    if (matched == 0) throw Error("no training post appears in " + f.truth);
    report["factor_accuracy"] = {{"posts", matched},
                                 {"accuracy", static_cast<double>(correct) / static_cast<double>(matched)}};
  }
  write_json(dir / "eval.json", report);
  write_manifest(dir, "eval.", "eval", args, {{"run", f.run}, {"heldout", f.heldout}, {"gold", f.gold}, {"truth", f.truth}},
                 0, {f.heldout, f.truth, f.common.config_path});
  out << report.dump(2) << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------- trends

int cmd_trends(const TrendsFlags& f, const std::vector<std::string>& args, spdlog::logger& log, std::ostream& out) {
  Run run = load_run(f.run);
  const auto& graph = run.train.graph();
  std::vector<UserId> users;
  if (f.users.empty()) {
    for (UserId u = 0; u < graph.user_count(); ++u) users.push_back(u);
  } else {
    std::stringstream list(f.users);
    std::string label;
    while (std::getline(list, label, ',')) {
      auto u = graph.find(label);
      if (!u) throw ConfigError("unknown user '" + label + "' in --users");
      users.push_back(*u);
    }
  }
  const fs::path dir = prepare_out(f.common.out_dir, run.dir / "trends");

  const TrendMatrix topics = topic_trends(run.state, users);
  const TrendMatrix personality = personality_trends(run.state, users);
  write_text(dir / "topic_trends.csv", topics.to_csv());
  write_json(dir / "topic_trends.json", topics.to_json());
  write_text(dir / "personality_trends.csv", personality.to_csv());
  write_json(dir / "personality_trends.json", personality.to_json());

  std::vector<TopicId> characters = f.topics;
  if (characters.empty()) {
    // The five topics with the most posts over all epochs.
    std::vector<std::pair<double, TopicId>> totals;
    for (std::size_t r = 0; r < topics.rows.size(); ++r) {
      double total = 0.0;
      for (double v : topics.values[r]) total += v;
      totals.emplace_back(-total, std::stoull(topics.rows[r]));
    }
    std::sort(totals.begin(), totals.end());
    for (std::size_t i = 0; i < std::min<std::size_t>(5, totals.size()); ++i) characters.push_back(totals[i].second);
  }
  for (TopicId k : characters) {
    const TrendMatrix ch = topic_character(run.state, k);
    write_text(dir / ("topic_character_" + std::to_string(k) + ".csv"), ch.to_csv());
    write_json(dir / ("topic_character_" + std::to_string(k) + ".json"), ch.to_json());
  }

  json events = json::array();
  for (const auto& e : detect_major_events(topics, f.threshold))
    events.push_back({{"topic", e.label}, {"epoch", e.epoch}, {"share", e.share}});
  write_json(dir / "events.json", events);
  log.info("{} topics x {} epochs, {} major events", topics.rows.size(), topics.columns.size(), events.size());
  write_manifest(dir, "", "trends", args, {{"run", f.run}, {"users", f.users}, {"topics", f.topics}, {"threshold", f.threshold}},
                 0, {f.common.config_path});
  out << json{{"out", dir.string()}, {"topics", topics.rows.size()}, {"epochs", topics.columns.size()}, {"events", events}}
             .dump(2)
      << '\n';
  return kExitOk;
}

// -------------------------------------------------------------------- predict

int cmd_predict(const PredictFlags& f, const std::vector<std::string>& args, spdlog::logger& log, std::ostream& out) {
  if (f.task != "authorship" && f.task != "commenting") throw ConfigError("--task must be authorship or commenting");
  if (f.task == "commenting" && f.comments.empty()) throw ConfigError("--comments is required for the commenting task");
  if (f.k == 0) throw ConfigError("--k must be at least 1");
  Run run = load_run(f.run);
  const fs::path dir = prepare_out(f.common.out_dir, run.dir);

  PredictionConfig config;
  config.k = f.k;
  config.max_queries = f.max_queries;
  config.seed = f.common.seed;
  config.beta = run.state.hyper().beta;
  const EpochIndex last = static_cast<EpochIndex>(run.train.epoch_count() - 1);
  config.test_epoch = f.test_epoch.value_or(last);
  if (config.test_epoch == 0) throw ConfigError("prediction needs at least one training epoch before --test-epoch");

  PredictionReport report;
  if (f.task == "authorship") {
    report = authorship_prediction(run.train, run.assignments, config);
  } else {
    auto in = open_input(f.comments, "--comments");
    const auto comments = read_comments(in, run.train);
    report = commenting_prediction(run.train, run.assignments, comments, config);
  }
  log.info("{} accuracy {:.4f} over {} queries", report.task, report.accuracy, report.queries);
  json j = report.to_json();
  j["k"] = config.k;
  j["test_epoch"] = config.test_epoch;
  write_json(dir / ("predict_" + report.task + ".json"), j);
  write_manifest(dir, "predict_" + report.task + ".", "predict", args,
                 {{"run", f.run}, {"task", f.task}, {"k", f.k}, {"test_epoch", config.test_epoch}, {"max_queries", f.max_queries}},
                 f.common.seed, {f.comments, f.common.config_path});
  out << j.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------- bench

int cmd_bench(const BenchFlags& f, const std::vector<std::string>& args, spdlog::logger& log, std::ostream& out) {
  const Hyperparams hyper = f.hyper.resolve();
  if (f.workers.empty()) throw ConfigError("--workers needs at least one value");
  for (auto k : f.workers)
    if (k == 0 || k > f.batch) throw ConfigError("every --workers value must be in [1, --batch]");
  const fs::path dir = prepare_out(f.common.out_dir, {});

  Corpus corpus;
  if (!f.posts.empty()) {
    auto users_in = open_input(f.users_file, "--users-file");
    auto posts_in = open_input(f.posts, "--posts");
    IngestConfig ingest;
    ingest.epoch_length = parse_duration(f.epoch_length);
    corpus = ingest_posts(posts_in, users_in, ingest);
  } else {
    GenConfig g;
    g.users = f.users;
    g.vocab = f.vocab;
    g.epochs = 3;
    g.posts_per_epoch = std::max<std::size_t>(1, f.synthetic_posts / g.epochs);
    g.hyper = hyper;
    if (f.seed_topics > 0) g.seed_topics = disjoint_block_topics(f.seed_topics, f.vocab);
    Rng rng(f.common.seed);
    corpus = generate(g, rng).corpus;
  }
  log.info("benchmarking on {} posts", corpus.size());

  std::ostringstream table;
  table << "workers,posts_processed,per_post_ms\n";
  out << std::left << std::setw(8) << "workers" << std::setw(18) << "posts_processed" << "per_post_ms\n";
  json summary = json::array();
  for (std::size_t k : f.workers) {
    ParallelOptions options;
    options.workers = k;
    options.batch_size = f.batch;
    options.sweeps = f.sweeps;
    options.seed = f.common.seed;
    options.record_assignments = false;
    const auto start = std::chrono::steady_clock::now();
    std::size_t processed = std::min(f.batch, corpus.size());
    options.on_round = [&](const RoundMetrics& m) {
      processed += m.posts;
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      const double per_post = ms / static_cast<double>(processed);
      table << k << ',' << processed << ',' << per_post << '\n';
      out << std::left << std::setw(8) << k << std::setw(18) << processed << std::fixed << std::setprecision(4)
          << per_post << '\n';
    };
    fit_parallel(corpus, hyper, options);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    summary.push_back({{"workers", k}, {"posts", corpus.size()}, {"per_post_ms", ms / static_cast<double>(corpus.size())}});
  }
  write_text(dir / "bench.csv", table.str());
  write_json(dir / "bench.json", summary);
  write_manifest(dir, "", "bench", args,
                 {{"hyper", hyperparams_to_json(hyper)}, {"workers", f.workers}, {"batch", f.batch}, {"sweeps", f.sweeps},
                  {"posts", f.posts}, {"synthetic_posts", f.synthetic_posts}, {"seed", f.common.seed}},
                 f.common.seed, {f.posts, f.users_file, f.common.config_path});
  return kExitOk;
}

}  // namespace

long long parse_duration(const std::string& text) {
  if (text.empty()) throw ConfigError("empty duration");
  std::size_t used = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad duration '" + text + "'");
  }
  long long scale = 1;
  const std::string unit = text.substr(used);
  if (unit.empty() || unit == "s")
    scale = 1;
  else if (unit == "m")
    scale = 60;
  else if (unit == "h")
    scale = 3600;
  else if (unit == "d")
    scale = 86400;
  else
    throw ConfigError("bad duration unit in '" + text + "' (use s, m, h or d)");
  if (value <= 0) throw ConfigError("duration must be positive: '" + text + "'");
  return value * scale;
}

std::string git_blob_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path + " for hashing");
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string data = "blob " + std::to_string(body.size());
  data.push_back('\0');
  data += body;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 failed for " + path);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relational CRP topic models: generate, fit, evaluate and analyse", "relcrp"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenerateFlags gen;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic corpus with ground truth");
  add_common(generate_cmd, gen.common);
  gen.hyper.add(generate_cmd);
  generate_cmd->add_option("--users", gen.users, "Number of users")->capture_default_str();
  generate_cmd->add_option("--regions", gen.regions, "Number of regions")->capture_default_str();
  generate_cmd->add_option("--region-scheme", gen.region_scheme, "round_robin or random")->capture_default_str();
  generate_cmd->add_option("--mean-degree", gen.mean_degree, "Mean number of followees")->capture_default_str();
  generate_cmd->add_option("--epochs", gen.epochs, "Number of epochs")->capture_default_str();
  generate_cmd->add_option("--posts-per-epoch", gen.posts_per_epoch, "Posts per epoch")->capture_default_str();
  generate_cmd->add_option("--min-tokens", gen.min_tokens, "Fewest tokens per post")->capture_default_str();
  generate_cmd->add_option("--max-tokens", gen.max_tokens, "Most tokens per post")->capture_default_str();
  generate_cmd->add_option("--vocab", gen.vocab, "Vocabulary size")->capture_default_str();
  generate_cmd->add_option("--seed-topics", gen.seed_topics,
                           "Use this many fixed topics on disjoint vocabulary blocks (0: draw topics from the prior)")
      ->capture_default_str();
  generate_cmd->add_option("--epoch-length", gen.epoch_length, "Epoch length, e.g. 15d or 3600s")->capture_default_str();

  FitFlags fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model online over a post stream");
  add_common(fit_cmd, fit.common);
  fit.hyper.add(fit_cmd);
  fit_cmd->add_option("--posts", fit.posts, "Posts file (TSV or JSON lines)");
  fit_cmd->add_option("--users-file", fit.users_file, "Users file (TSV or JSON lines)");
  fit_cmd->add_option("--epoch-length", fit.epoch_length, "Epoch length, e.g. 15d or 3600s")->capture_default_str();
  fit_cmd->add_option("--batch", fit.batch, "Posts per mini-batch")->capture_default_str();
  fit_cmd->add_option("--initial-batch", fit.initial_batch, "Size of the first (sequential) batch; 0 uses --batch")
      ->capture_default_str();
  fit_cmd->add_option("--sweeps", fit.sweeps, "Gibbs sweeps per batch")->capture_default_str();
  fit_cmd->add_option("--workers", fit.workers, "Worker threads in parallel mode")->capture_default_str();
  fit_cmd->add_option("--mode", fit.mode, "sequential or parallel")->capture_default_str();
  fit_cmd->add_option("--heldout-fraction", fit.heldout_fraction,
                      "Hold out this fraction of the final epoch's posts for perplexity")
      ->capture_default_str();
  fit_cmd->add_option("--checkpoint-every", fit.checkpoint_every, "Write checkpoint.json every N batches (sequential)")
      ->capture_default_str();
  fit_cmd->add_option("--resume", fit.resume, "Continue from a checkpoint written by an earlier fit");

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "Perplexity and clustering scores for a fitted run");
  add_common(eval_cmd, ev.common, false);
  eval_cmd->add_option("--run", ev.run, "Output directory of a fit");
  eval_cmd->add_option("--heldout", ev.heldout, "Held-out posts (defaults to the run's heldout.tsv)");
  eval_cmd->add_flag("--gold", ev.gold, "Score topic labels against the gold labels of the training posts");
  eval_cmd->add_option("--truth", ev.truth, "Ground-truth JSON from generate; adds influence-factor accuracy");

  TrendsFlags tr;
  auto* trends_cmd = app.add_subcommand("trends", "Topic, personality and topic-character trend matrices");
  add_common(trends_cmd, tr.common, false);
  trends_cmd->add_option("--run", tr.run, "Output directory of a fit");
  trends_cmd->add_option("--users", tr.users, "Comma-separated user labels (default: all users)");
  trends_cmd->add_option("--topic", tr.topics, "Topic id for a character matrix (repeatable; default: 5 largest)");
  trends_cmd->add_option("--threshold", tr.threshold, "Minimum share for a major event")->capture_default_str();

  PredictFlags pr;
  std::size_t test_epoch = 0;
  auto* predict_cmd = app.add_subcommand("predict", "Authorship or commenting prediction with k-NN over topic labels");
  add_common(predict_cmd, pr.common);
  predict_cmd->add_option("--run", pr.run, "Output directory of a fit");
  predict_cmd->add_option("--task", pr.task, "authorship or commenting")->capture_default_str();
  predict_cmd->add_option("--comments", pr.comments, "Comments file: post_id<TAB>commenter per line");
  auto* test_epoch_opt =
      predict_cmd->add_option("--test-epoch", test_epoch, "First epoch used for queries (default: the last)");
  predict_cmd->add_option("--k", pr.k, "Neighbours in the vote")->capture_default_str();
  predict_cmd->add_option("--max-queries", pr.max_queries, "Upper bound on queries")->capture_default_str();

  BenchFlags be;
  auto* bench_cmd = app.add_subcommand("bench", "Per-post latency against posts processed for several worker counts");
  add_common(bench_cmd, be.common);
  be.hyper.add(bench_cmd);
  bench_cmd->add_option("--posts", be.posts, "Posts file (default: a synthetic corpus)");
  bench_cmd->add_option("--users-file", be.users_file, "Users file for --posts");
  bench_cmd->add_option("--epoch-length", be.epoch_length, "Epoch length for --posts")->capture_default_str();
  bench_cmd->add_option("--synthetic-posts", be.synthetic_posts, "Size of the synthetic corpus")->capture_default_str();
  bench_cmd->add_option("--users", be.users, "Users in the synthetic corpus")->capture_default_str();
  bench_cmd->add_option("--vocab", be.vocab, "Vocabulary of the synthetic corpus")->capture_default_str();
  bench_cmd->add_option("--seed-topics", be.seed_topics, "Fixed topics in the synthetic corpus")->capture_default_str();
  bench_cmd->add_option("--workers", be.workers, "Worker counts to compare")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--batch", be.batch, "Posts per mini-batch")->capture_default_str();
  bench_cmd->add_option("--sweeps", be.sweeps, "Gibbs sweeps per batch")->capture_default_str();

  std::vector<std::string> argv_store{"relcrp"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  auto logger = make_logger(err);
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    CLI::App* sub = app.get_subcommands().front();
    const Common* common = sub == generate_cmd  ? &gen.common
                           : sub == fit_cmd     ? &fit.common
                           : sub == eval_cmd    ? &ev.common
                           : sub == trends_cmd  ? &tr.common
                           : sub == predict_cmd ? &pr.common
                                                : &be.common;
    apply_config(sub, common->config_path);
    if (test_epoch_opt->count() > 0) pr.test_epoch = static_cast<EpochIndex>(test_epoch);

    if (sub == generate_cmd) return cmd_generate(gen, args, *logger, out);
    if (sub == fit_cmd) return cmd_fit(fit, args, *logger, out);
    if (sub == eval_cmd) return cmd_eval(ev, args, *logger, out);
    if (sub == trends_cmd) return cmd_trends(tr, args, *logger, out);
    if (sub == predict_cmd) return cmd_predict(pr, args, *logger, out);
    return cmd_bench(be, args, *logger, out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    err << "relcrp: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "relcrp: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace relcrp::cli
