#pragma once

// Command-line front end: train, score, select, evaluate, synth.
//
// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric. Every command that writes a
// primary output also writes <output>.run.json recording the flags, input
// and output digests, seeds, tool version and wall-clock time.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lingsel/corpus_io.hpp"
#include "lingsel/dsvdd.hpp"
#include "lingsel/encoding.hpp"
#include "lingsel/error.hpp"
#include "lingsel/evaluation.hpp"
#include "lingsel/iforest.hpp"
#include "lingsel/model_io.hpp"
#include "lingsel/ocsvm.hpp"
#include "lingsel/selection.hpp"

#ifndef LINGSEL_VERSION
#define LINGSEL_VERSION "0.1.0"
#endif

namespace lingsel::cli {

struct TrainOptions {
  std::string method;
  std::string manifest;
  std::string blob;
  std::string out;
  double nu = 0.01;
  double gamma = 0.0;  ///< 0 selects the "scale" rule
  double tol = 1e-6;
  std::size_t max_iter = 100000;
  std::size_t trees = 200;
  std::size_t subsample = 256;
  std::size_t ae_epochs = 2500;
  std::size_t enc_epochs = 1000;
  double ae_lr = 1e-2;
  double enc_lr = 1e-3;
  double weight_decay = 1e-6;
  std::size_t batch_size = 64;
  std::size_t latent_dim = 32;
  std::uint64_t seed = 0;
  bool normalize = false;
  std::size_t threads = 0;
};

struct ScoreOptions {
  std::string model;
  std::string manifest;
  std::string blob;
  std::string out;
  std::size_t threads = 0;
};

struct SelectOptions {
  std::string strategy = "ensemble";
  std::vector<std::string> scores;
  std::string pool;
  double hours = 0.0;
  std::size_t l0 = 1000;
  bool tight_budget = false;
  std::string exclude;
  std::uint64_t seed = 0;
  std::string out;
};

struct EvaluateOptions {
  std::vector<std::string> models;
  std::string pos;
  std::string neg;
  double dsvdd_quantile = 0.95;
  std::string out;
};

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t n_target = 500;
  std::size_t n_other = 2000;
  std::size_t dim = 512;
  double separation = 10.0;
  std::string out_target;
  std::string out_other;
};

namespace detail {

using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

/// Sidecar written next to a primary output.
class RunManifest {
 public:
  RunManifest(std::string command, const CLI::App& sub) : command_(std::move(command)) {
    for (const CLI::Option* opt : sub.get_options()) {
      const std::string name = opt->get_name();
      if (name == "--help" || name == "-h") continue;
      const auto& results = opt->results();
      if (results.empty()) {
        flags_[name] = opt->get_default_str();
      } else if (results.size() == 1 && !opt->get_expected_max()) {
        flags_[name] = "true";
      } else {
        std::string joined;
        for (const auto& r : results) joined += (joined.empty() ? "" : ",") + r;
        flags_[name] = joined;
      }
    }
  }

  void input(const std::string& path) {
    if (!path.empty()) inputs_[path] = sha256_file(path);
  }
  void output(const std::string& path) { outputs_.push_back(path); }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }

  void write(const std::string& primary) const {
    ojson j;
    j["command"] = command_;
    j["tool_version"] = LINGSEL_VERSION;
    j["flags"] = flags_;
    j["inputs"] = inputs_;
    ojson outs = ojson::object();
    for (const auto& p : outputs_) outs[p] = sha256_file(p);
    j["outputs"] = outs;
    j["seeds"] = seeds_;
    j["wall_clock_sec"] = std::chrono::duration<double>(Clock::now() - start_).count();
    std::ofstream f(primary + ".run.json", std::ios::trunc);
    f << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::map<std::string, std::string> flags_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
  std::map<std::string, std::uint64_t> seeds_;
  Clock::time_point start_ = Clock::now();
};

inline Corpus load_corpus(const std::string& manifest, const std::string& blob) {
  return blob.empty() ? load_manifest(manifest) : load_binary_embeddings(manifest, blob);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

inline std::vector<ScoredId> load_scores(const std::string& path) {
  std::vector<ScoredId> out;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(number) + ": ";
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!row.is_object() || !row.contains("id") || !row["id"].is_string() ||
        !row.contains("score") || !row["score"].is_number()) {
      throw DataError(where + "expected {\"id\": string, \"score\": number}");
    }
    out.push_back({row["id"].get<std::string>(), row["score"].get<double>()});
  }
  return out;
}

inline std::unordered_set<std::string> load_id_list(const std::string& path) {
  std::unordered_set<std::string> ids;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.insert(line.substr(b, e - b + 1));
  }
  return ids;
}

inline std::string percent(double rate) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * rate;
  return s.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline int cmd_train(const TrainOptions& o, detail::RunManifest& run, std::ostream& log) {
  Corpus corpus = detail::load_corpus(o.manifest, o.blob);
  run.input(o.manifest);
  run.input(o.blob);
  if (o.normalize) normalize_embeddings(corpus);
  const Matrix data = embedding_matrix(corpus);

  ClassifierModel model;
  model.normalize = o.normalize;
  if (o.method == "ocsvm") {
    OcSvmConfig cfg;
    cfg.nu = o.nu;
    if (o.gamma > 0.0) cfg.gamma = o.gamma;
    cfg.tol = o.tol;
    cfg.max_iter = o.max_iter;
    auto m = ocsvm_train(data, cfg);
    if (!m.converged) {
      log << "warning: one-class SVM stopped after " << m.iterations
          << " updates without meeting tol " << o.tol << "\n";
    }
    model.model = std::move(m);
  } else if (o.method == "iforest") {
    IForestConfig cfg;
    cfg.n_trees = o.trees;
    cfg.subsample = o.subsample;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    model.model = iforest_train(data, cfg);
    run.seed("iforest", o.seed);
  } else if (o.method == "dsvdd") {
    DsvddConfig cfg;
    cfg.ae_epochs = o.ae_epochs;
    cfg.enc_epochs = o.enc_epochs;
    cfg.ae_lr = o.ae_lr;
    cfg.enc_lr = o.enc_lr;
    cfg.weight_decay = o.weight_decay;
    cfg.batch_size = o.batch_size;
    cfg.latent_dim = o.latent_dim;
    cfg.seed = o.seed;
    auto fit = dsvdd_fit(data, cfg);
    log << "dsvdd: reconstruction loss " << fit.ae_trace.epoch_loss.front() << " -> "
        << fit.ae_trace.epoch_loss.back() << ", svdd loss " << fit.svdd_trace.epoch_loss.front()
        << " -> " << fit.svdd_trace.epoch_loss.back() << "\n";
    model.model = std::move(fit.model);
    run.seed("dsvdd", o.seed);
  } else {
    throw UsageError("unknown method \"" + o.method + "\" (expected ocsvm, iforest or dsvdd)");
  }
  save_model(model, o.out);
  run.output(o.out);
  run.write(o.out);
  return 0;
}

inline int cmd_score(const ScoreOptions& o, detail::RunManifest& run, std::ostream& log) {
  const ClassifierModel model = load_model(o.model);
  run.input(o.model);
  Corpus pool = detail::load_corpus(o.manifest, o.blob);
  run.input(o.manifest);
  run.input(o.blob);
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& r : pool.records) ids.push_back(r.id);
  const auto scores = score_corpus(model, std::move(pool), o.threads);

  auto out = detail::open_out(o.out);
  std::size_t inliers = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    detail::ojson row;
    row["id"] = ids[i];
    row["score"] = scores[i];
    out << row.dump() << '\n';
    inliers += scores[i] >= 0.0 ? 1 : 0;
  }
  out.close();
  log << "scored " << scores.size() << " utterances with " << model.type() << "; " << inliers
      << " have decision >= 0\n";
  run.output(o.out);
  run.write(o.out);
  return 0;
}

inline int cmd_select(const SelectOptions& o, detail::RunManifest& run, std::ostream& log) {
  SelectionConfig cfg = SelectionConfig::from_hours(o.hours);
  cfg.l0 = o.l0;
  cfg.seed = o.seed;
  cfg.tight_budget = o.tight_budget;
  std::size_t expected_lists = 0;
  if (o.strategy == "ensemble") {
    cfg.strategy = Strategy::ensemble;
    expected_lists = 3;
  } else if (o.strategy == "single") {
    cfg.strategy = Strategy::single;
    expected_lists = 1;
  } else if (o.strategy == "random") {
    cfg.strategy = Strategy::random;
  } else {
    throw UsageError("unknown strategy \"" + o.strategy + "\"");
  }
  if (o.scores.size() != expected_lists) {
    throw UsageError("strategy " + o.strategy + " takes " + std::to_string(expected_lists) +
                     " score file(s), got " + std::to_string(o.scores.size()));
  }
  validate(cfg);

  std::unordered_set<std::string> excluded;
  if (!o.exclude.empty()) {
    excluded = detail::load_id_list(o.exclude);
    run.input(o.exclude);
  }
  std::vector<std::string> pool_ids;
  DurationMap durations;
  for (auto& rec : load_durations(o.pool)) {
    if (excluded.contains(rec.id)) continue;
    pool_ids.push_back(rec.id);
    durations.emplace(std::move(rec.id), rec.duration_sec);
  }
  run.input(o.pool);

  std::vector<ScoredList> lists;
  for (const auto& path : o.scores) {
    std::vector<ScoredId> kept;
    for (auto& s : detail::load_scores(path)) {
      if (excluded.contains(s.id)) continue;
      if (!durations.contains(s.id)) {
        throw DataError(path + ": scored id \"" + s.id + "\" is not in the pool manifest");
      }
      kept.push_back(std::move(s));
    }
    if (kept.size() != durations.size()) {
      throw DataError(path + ": scores " + std::to_string(kept.size()) + " of " +
                      std::to_string(durations.size()) + " pool utterances");
    }
    lists.push_back(rank_pool(kept, durations));
    run.input(path);
  }

  SelectionResult result;
  switch (cfg.strategy) {
    case Strategy::ensemble:
      result = select_ensemble(lists[0], lists[1], lists[2], durations, cfg);
      break;
    case Strategy::single:
      result = select_single(lists[0], durations, cfg);
      break;
    case Strategy::random:
      result = select_random(pool_ids, durations, cfg);
      run.seed("random", o.seed);
      break;
  }

  auto out = detail::open_out(o.out);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < result.selected.size(); ++i) {
    const auto& id = result.selected[i];
    const double d = durations.at(id);
    cumulative += d;
    detail::ojson row;
    row["rank"] = i + 1;
    row["id"] = id;
    row["duration_sec"] = d;
    row["cumulative_sec"] = cumulative;
    out << row.dump() << '\n';
  }
  detail::ojson summary;
  summary["strategy"] = o.strategy;
  summary["selected"] = result.selected.size();
  summary["total_sec"] = result.total_sec;
  summary["budget_sec"] = cfg.budget_sec;
  summary["exhausted"] = result.exhausted;
  summary["passes"] = result.passes;
  summary["l0"] = cfg.l0;
  summary["tight_budget"] = cfg.tight_budget;
  detail::ojson tail;
  tail["summary"] = std::move(summary);
  out << tail.dump() << '\n';
  out.close();

  if (result.exhausted) {
    log << "warning: candidates exhausted before the budget; selected "
        << result.total_sec / 3600.0 << " of " << o.hours << " hours\n";
  }
  log << "selected " << result.selected.size() << " utterances, " << result.total_sec
      << " s\n";
  run.output(o.out);
  run.write(o.out);
  return 0;
}

inline int cmd_evaluate(const EvaluateOptions& o, detail::RunManifest& run, std::ostream& out,
                        std::ostream& /*log*/) {
  if (!(o.dsvdd_quantile > 0.0 && o.dsvdd_quantile <= 1.0)) {
    throw UsageError("--dsvdd-quantile must lie in (0, 1]");
  }
  const Corpus pos = load_manifest(o.pos);
  const Corpus neg = load_manifest(o.neg);
  run.input(o.pos);
  run.input(o.neg);
  if (pos.empty()) throw DataError("positive set " + o.pos + " is empty");
  if (neg.empty()) throw DataError("negative set " + o.neg + " is empty");

  struct Row {
    std::string label;
    std::string type;
    double threshold;
    ErrorRates rates;
  };
  std::vector<Row> rows;
  for (const auto& path : o.models) {
    const ClassifierModel model = load_model(path);
    run.input(path);
    double threshold = 0.0;
    if (const auto* m = std::get_if<DsvddModel>(&model.model)) {
      threshold = -dsvdd_threshold(*m, o.dsvdd_quantile);
    }
    const auto dp = score_corpus(model, pos);
    const auto dn = score_corpus(model, neg);
    rows.push_back({std::filesystem::path(path).filename().string(), model.type(), threshold,
                    evaluate_classifier(dp, dn, threshold)});
  }

  // Plain-text table: one column per classifier, rates in percent.
  std::ostringstream table;
  table << std::left << std::setw(8) << "" << std::right;
  for (const auto& r : rows) table << std::setw(10) << r.type;
  table << "\n" << std::left << std::setw(8) << "Pos." << std::right;
  for (const auto& r : rows) table << std::setw(10) << detail::percent(r.rates.pos_err);
  table << "\n" << std::left << std::setw(8) << "Neg." << std::right;
  for (const auto& r : rows) table << std::setw(10) << detail::percent(r.rates.neg_err);
  table << "\n(error rates in %; " << pos.size() << " positive / " << neg.size()
        << " negative utterances)\n";
  out << table.str();

  if (!o.out.empty()) {
    detail::ojson report;
    report["n_pos"] = pos.size();
    report["n_neg"] = neg.size();
    report["dsvdd_quantile"] = o.dsvdd_quantile;
    detail::ojson list = detail::ojson::array();
    for (const auto& r : rows) {
      detail::ojson j;
      j["model"] = r.label;
      j["type"] = r.type;
      j["threshold"] = r.threshold;
      j["pos_err"] = r.rates.pos_err;
      j["neg_err"] = r.rates.neg_err;
      list.push_back(std::move(j));
    }
    report["classifiers"] = std::move(list);
    auto f = detail::open_out(o.out);
    f << report.dump(2) << '\n';
    f.close();
    std::ofstream(o.out + ".txt", std::ios::trunc) << table.str();
    run.output(o.out);
    run.output(o.out + ".txt");
    run.write(o.out);
  }
  return 0;
}

inline int cmd_synth(const SynthOptions& o, detail::RunManifest& run, std::ostream& log) {
  const auto suite = gen_synthetic_suite(o.seed, o.n_target, o.n_other, o.dim, o.separation);
  write_manifest(suite.target, o.out_target);
  write_manifest(suite.other, o.out_other);
  log << "wrote " << suite.target.size() << " target and " << suite.other.size()
      << " other utterances (dim " << o.dim << ")\n";
  run.seed("synth", o.seed);
  run.output(o.out_target);
  run.output(o.out_other);
  run.write(o.out_target);
  return 0;
}

// ---------------------------------------------------------------------------

/// Parses argv and dispatches. Human-readable reports go to `out`,
/// diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Target-language utterance selection with one-class classifiers", "lingsel"};
  app.require_subcommand(1);
  app.set_version_flag("--version", LINGSEL_VERSION);

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a one-class classifier on target embeddings");
  t->add_option("--method", train.method, "ocsvm | iforest | dsvdd")->required();
  t->add_option("--manifest", train.manifest, "Target manifest (JSONL)")->required();
  t->add_option("--blob", train.blob, "LEMB embeddings paired with --manifest");
  t->add_option("--out", train.out, "Model file to write")->required();
  t->add_option("--nu", train.nu, "OcSVM nu")->capture_default_str();
  t->add_option("--gamma", train.gamma, "OcSVM RBF width (0 = scale rule)")->capture_default_str();
  t->add_option("--tol", train.tol, "OcSVM KKT tolerance")->capture_default_str();
  t->add_option("--max-iter", train.max_iter, "OcSVM pair updates")->capture_default_str();
  t->add_option("--trees", train.trees, "IF tree count")->capture_default_str();
  t->add_option("--subsample", train.subsample, "IF subsample size psi")->capture_default_str();
  t->add_option("--ae-epochs", train.ae_epochs, "D-SVDD pretraining epochs")
      ->capture_default_str();
  t->add_option("--enc-epochs", train.enc_epochs, "D-SVDD encoder epochs")->capture_default_str();
  t->add_option("--ae-lr", train.ae_lr, "D-SVDD pretraining rate")->capture_default_str();
  t->add_option("--enc-lr", train.enc_lr, "D-SVDD encoder rate")->capture_default_str();
  t->add_option("--weight-decay", train.weight_decay, "D-SVDD lambda")->capture_default_str();
  t->add_option("--batch-size", train.batch_size, "D-SVDD minibatch")->capture_default_str();
  t->add_option("--latent-dim", train.latent_dim, "D-SVDD latent width")->capture_default_str();
  t->add_option("--seed", train.seed, "RNG seed")->capture_default_str();
  t->add_flag("--normalize", train.normalize, "L2-normalise embeddings first");
  t->add_option("--threads", train.threads, "Worker threads (0 = LINGSEL_THREADS or all)")
      ->capture_default_str();

  ScoreOptions score;
  auto* s = app.add_subcommand("score", "Score a pool with a trained model");
  s->add_option("--model", score.model, "Model file")->required();
  s->add_option("--manifest", score.manifest, "Pool manifest (JSONL)")->required();
  s->add_option("--blob", score.blob, "LEMB embeddings paired with --manifest");
  s->add_option("--out", score.out, "Scores file to write (JSONL)")->required();
  s->add_option("--threads", score.threads, "Worker threads")->capture_default_str();

  SelectOptions select;
  auto* sel = app.add_subcommand("select", "Select a duration-budgeted subset of the pool");
  sel->add_option("--strategy", select.strategy, "ensemble | single | random")
      ->capture_default_str();
  sel->add_option("--scores", select.scores, "Score files; for ensemble in U1,U2,U3 order")
      ->delimiter(',');
  sel->add_option("--pool", select.pool, "Pool manifest (durations)")->required();
  sel->add_option("--hours", select.hours, "Budget k in hours")->required();
  sel->add_option("--l0", select.l0, "Initial ranking limit")->capture_default_str();
  sel->add_flag("--tight-budget", select.tight_budget, "Check the budget before every append");
  sel->add_option("--exclude", select.exclude, "File of ids to drop from the pool");
  sel->add_option("--seed", select.seed, "Seed for the random strategy")->capture_default_str();
  sel->add_option("--out", select.out, "Selection file to write (JSONL)")->required();

  EvaluateOptions evaluate;
  auto* e = app.add_subcommand("evaluate", "Positive/negative error rates");
  e->add_option("--model", evaluate.models, "Model file(s)")->required();
  e->add_option("--pos", evaluate.pos, "Target-language manifest")->required();
  e->add_option("--neg", evaluate.neg, "Non-target manifest")->required();
  e->add_option("--dsvdd-quantile", evaluate.dsvdd_quantile, "D-SVDD distance quantile")
      ->capture_default_str();
  e->add_option("--out", evaluate.out, "JSON report (text copy at <out>.txt)");

  SynthOptions synth;
  auto* y = app.add_subcommand("synth", "Generate a seeded two-cluster suite");
  y->add_option("--seed", synth.seed, "RNG seed")->capture_default_str();
  y->add_option("--n-target", synth.n_target, "Target utterances")->capture_default_str();
  y->add_option("--n-other", synth.n_other, "Non-target utterances")->capture_default_str();
  y->add_option("--dim", synth.dim, "Embedding dimension")->capture_default_str();
  y->add_option("--separation", synth.separation, "RMS per-coordinate mean shift")
      ->capture_default_str();
  y->add_option("--out-target", synth.out_target, "Target manifest to write")->required();
  y->add_option("--out-other", synth.out_other, "Other manifest to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << LINGSEL_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\n" << "run with --help for usage\n";
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    if (t->parsed()) {
      detail::RunManifest run("train", *t);
      return cmd_train(train, run, err);
    }
    if (s->parsed()) {
      detail::RunManifest run("score", *s);
      return cmd_score(score, run, err);
    }
    if (sel->parsed()) {
      detail::RunManifest run("select", *sel);
      return cmd_select(select, run, err);
    }
    if (e->parsed()) {
      detail::RunManifest run("evaluate", *e);
      return cmd_evaluate(evaluate, run, out, err);
    }
    if (y->parsed()) {
      detail::RunManifest run("synth", *y);
      return cmd_synth(synth, run, err);
    }
  } catch (const Error& ex) {
    const char* label = ex.kind() == ErrorKind::usage  ? "usage error"
                        : ex.kind() == ErrorKind::data ? "data error"
                                                       : "numeric error";
    err << label << ": " << ex.what() << "\n";
    return ex.exit_code();
  } catch (const std::exception& ex) {
    err << "data error: " << ex.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  }
  return static_cast<int>(ErrorKind::usage);
}

}  // namespace lingsel::cli
