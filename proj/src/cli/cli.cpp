// SPDX-License-Identifier: Apache-2.0
#include "retain/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "retain/checkpoint.hpp"
#include "retain/errors.hpp"
#include "retain/gradcheck.hpp"
#include "retain/interpret.hpp"
#include "retain/kernels.hpp"
#include "retain/metrics.hpp"
#include "retain/trainer.hpp"

namespace retain::cli {

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kVersion = "1.0.0";

struct Common {
  std::uint64_t seed = 1;
  std::string config;
  std::string manifest;
  std::string out = "-";
};

struct GenerateArgs {
  std::size_t cases = 100;
  std::size_t controls_per_case = 10;
  std::size_t min_visits = 5;
  std::size_t max_visits = 30;
  std::string motif = "recency";
  std::vector<int> motif_codes{12, 47};
  std::size_t window = 5;
  std::int64_t gap_days = 60;
  double decoy_rate = 0.9;
  std::string task = "l2d";
  std::string vocab_out;
};

struct TrainArgs {
  std::string data;
  std::string vocab;
  std::string model = "retain";
  std::string task = "l2d";
  std::string loss_csv;
  std::size_t epochs = 30;
  std::size_t batch_size = 100;
  double lr = 1e-3;
  double l2 = 1e-4;
  double dropout_v = 0.0;
  double dropout_c = 0.0;
  double dropout_hidden = 0.0;
  std::size_t patience = 5;
  double clip = 5.0;
  bool paper_dims = false;
  std::size_t m = 32, p = 32, q = 32;
  std::size_t hidden = 32;
  std::size_t window = 10;
};

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::vector<std::size_t> ks{5, 10};
  bool timings = false;
};

struct InterpretArgs {
  std::string data;
  std::string checkpoint;
  std::string vocab;
  std::int64_t patient = 0;
  std::size_t step = 0;
  std::size_t label = 0;
  std::size_t top = 10;
};

struct GradcheckArgs {
  std::string model = "retain";
  std::string task = "l2d";
  std::size_t visits = 5;
  bool dropout = false;
};

class Output {
 public:
  Output(const std::string& path, std::ostream& stdout_stream) {
    if (path == "-") {
      stream_ = &stdout_stream;
    } else {
      file_.open(path, std::ios::binary);
      if (!file_) throw IoError("cannot write " + path);
      stream_ = &file_;
    }
    path_ = path;
  }
  std::ostream& stream() { return *stream_; }
  void finish() {
    stream_->flush();
    if (!*stream_) throw IoError("write failed: " + path_);
  }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
  std::string path_;
};

std::string manifest_path(const Common& c, const std::string& subcommand) {
  if (!c.manifest.empty()) return c.manifest;
  if (!c.out.empty() && c.out != "-") return c.out + ".manifest.json";
  return "retain-" + subcommand + ".manifest.json";
}

void write_manifest(const Common& c, const std::string& subcommand, ojson resolved, ojson results, double seconds) {
  ojson m;
  m["tool"] = "retain_cli";
  m["version"] = kVersion;
  m["subcommand"] = subcommand;
  m["seed"] = c.seed;
  m["config_file"] = c.config.empty() ? ojson(nullptr) : ojson(c.config);
  m["kernel_backend"] = kernels::backend_name(kernels::active_backend());
  m["resolved"] = std::move(resolved);
  m["results"] = std::move(results);
  m["wall_seconds"] = seconds;
  const auto path = manifest_path(c, subcommand);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path);
  out << m.dump(2) << '\n';
}

data::Vocabulary load_vocab(const std::string& path) {
  return path.empty() ? data::Vocabulary::synthetic() : data::Vocabulary::load(path);
}

std::size_t label_width(Task task, const data::Vocabulary& vocab) {
  if (task == Task::kL2D) return 1;
  const auto [begin, end] = vocab.group_range("diagnosis");
  return end - begin;
}

std::vector<const data::PatientRecord*> select_split(const data::Cohort& cohort, const std::string& name) {
  if (name == "all") {
    std::vector<const data::PatientRecord*> all;
    for (const auto& r : cohort.records) all.push_back(&r);
    return all;
  }
  if (name != "train" && name != "valid" && name != "test") {
    throw ConfigError("unknown split '" + name + "' (expected train, valid, test or all)");
  }
  return cohort.in_split(data::parse_split(name));
}

int cmd_generate(const Common& c, const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const auto vocab = data::Vocabulary::synthetic();
  data::CohortConfig cc;
  cc.n_cases = a.cases;
  cc.controls_per_case = a.controls_per_case;
  cc.min_visits = a.min_visits;
  cc.max_visits = a.max_visits;
  cc.motif_kind = data::parse_motif_kind(a.motif);
  cc.motif_codes = a.motif_codes;
  cc.motif_window = a.window;
  cc.gap_days = a.gap_days;
  cc.decoy_rate = a.decoy_rate;
  cc.task = parse_task(a.task);
  cc.seed = c.seed;
  const auto cohort = data::generate_cohort(cc, vocab);
  Output o(c.out, out);
  data::write_records(cohort, o.stream());
  o.finish();
  if (!a.vocab_out.empty()) vocab.save(a.vocab_out);
  std::size_t cases = 0;
  for (const auto& r : cohort.records) cases += r.role == data::Role::kCase ? 1 : 0;
  err << "generated " << cohort.size() << " patients (" << cases << " cases)\n";
  ojson resolved = {{"out", c.out},
                    {"cases", a.cases},
                    {"controls_per_case", a.controls_per_case},
                    {"min_visits", a.min_visits},
                    {"max_visits", a.max_visits},
                    {"motif", a.motif},
                    {"motif_codes", a.motif_codes},
                    {"window", a.window},
                    {"gap_days", a.gap_days},
                    {"decoy_rate", a.decoy_rate},
                    {"task", a.task},
                    {"vocab_out", a.vocab_out}};
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(c, "generate", resolved, {{"patients", cohort.size()}, {"cases", cases}}, secs);
  return kExitOk;
}

int cmd_train(const Common& c, const TrainArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  const auto vocab = load_vocab(a.vocab);
  const auto cohort = data::read_records(std::filesystem::path(a.data));
  const auto kind = parse_model_kind(a.model);
  const auto task = parse_task(a.task);
  const auto given = [&sub](const char* name) { return sub.get_option(name)->count() > 0; };

  TrainConfig tc = default_train_config(kind, task, vocab.size(), label_width(task, vocab));
  if (a.paper_dims) {
    tc.model.dims = paper_dims(vocab.size(), tc.model.dims.s);
    tc.model.baseline_hidden = 256;
  } else {
    tc.model.baseline_hidden = 32;
  }
  if (given("--m")) tc.model.dims.m = a.m;
  if (given("--p")) tc.model.dims.p = a.p;
  if (given("--q")) tc.model.dims.q = a.q;
  if (given("--hidden")) tc.model.baseline_hidden = a.hidden;
  if (given("--l2")) tc.l2_coefficient = a.l2;
  if (given("--dropout-v")) tc.model.dropout.embedding = a.dropout_v;
  if (given("--dropout-c")) tc.model.dropout.context = a.dropout_c;
  if (given("--dropout-hidden")) tc.model.dropout.hidden = a.dropout_hidden;
  tc.model.window = a.window;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;
  tc.patience = a.patience;
  tc.clip_norm = a.clip;
  tc.seed = c.seed;
  tc.validate();

  for (const auto& r : cohort.records) r.validate(vocab.size());
  const auto result = train(cohort, tc, [&err](const EpochStats& e) {
    err << "epoch " << e.epoch << " train_nll " << e.train_nll << " valid_nll " << e.valid_nll << '\n';
    return true;
  });
  {
    Output o(c.out, out);
    o.stream() << checkpoint_to_json(*result.model) << '\n';
    o.finish();
  }
  const std::string loss_path = a.loss_csv.empty() ? (c.out == "-" ? "" : c.out + ".loss.csv") : a.loss_csv;
  if (!loss_path.empty()) write_loss_history(result.history, std::filesystem::path(loss_path));

  ojson resolved = ojson::parse(model_config_to_json(result.model->config()));
  resolved["data"] = a.data;
  resolved["vocab"] = a.vocab;
  resolved["out"] = c.out;
  resolved["loss_csv"] = loss_path;
  resolved["epochs"] = tc.epochs;
  resolved["batch_size"] = tc.batch_size;
  resolved["learning_rate"] = tc.learning_rate;
  resolved["l2"] = tc.l2_coefficient;
  resolved["patience"] = tc.patience;
  resolved["clip_norm"] = tc.clip_norm;
  resolved["optimizer"] = {{"name", "adam"}, {"beta1", tc.beta1}, {"beta2", tc.beta2}, {"epsilon", tc.epsilon}};
  write_manifest(c, "train", resolved,
                 {{"epochs_run", result.history.size()},
                  {"best_epoch", result.best_epoch},
                  {"stopped_early", result.stopped_early},
                  {"train_seconds", result.train_seconds}},
                 result.train_seconds);
  err << "trained " << to_string(kind) << " for " << result.history.size() << " epochs (best " << result.best_epoch
      << ")\n";
  return kExitOk;
}

int cmd_eval(const Common& c, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto model = load_checkpoint(a.checkpoint);
  const auto cohort = data::read_records(std::filesystem::path(a.data));
  const auto records = select_split(cohort, a.split);
  if (records.empty()) throw ConfigError("split '" + a.split + "' is empty");
  const auto report = metrics::evaluate(*model, records, a.ks);
  Output o(c.out, out);
  o.stream() << report.to_json(a.timings) << '\n';
  o.finish();
  err << "evaluated " << report.patients << " patients, nll " << report.neg_log_likelihood << '\n';
  ojson resolved = {{"data", a.data}, {"checkpoint", a.checkpoint}, {"split", a.split}, {"ks", a.ks}, {"out", c.out}};
  write_manifest(c, "eval", resolved, ojson::parse(report.to_json(true)), report.test_seconds);
  return kExitOk;
}

int cmd_interpret(const Common& c, const InterpretArgs& a, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const auto model = load_checkpoint(a.checkpoint);
  const auto* retain_model = dynamic_cast<const RetainModel*>(model.get());
  if (!retain_model) throw ConfigError("interpret needs a retain, retain-ts or rnn-attn-rnn checkpoint");
  const auto vocab = load_vocab(a.vocab);
  const auto cohort = data::read_records(std::filesystem::path(a.data));
  const auto* record = cohort.find(a.patient);
  if (!record) throw ConfigError("patient " + std::to_string(a.patient) + " not found in " + a.data);
  const auto steps = prediction_steps(*record, model->config().task);
  const std::size_t step = a.step == 0 ? steps.back() : a.step;
  if (step > record->visits.size()) throw ConfigError("step " + std::to_string(step) + " beyond the record");
  Rng unused(c.seed);
  const auto trace = retain_model->traces(*record, {step}, false, unused).front();
  const auto cm = interpret::contributions(trace, *retain_model, *record);
  const double error = interpret::reconstruction_error(cm);
  {
    Output o(c.out, out);
    interpret::export_contribution_timeline(cm, *record, vocab, o.stream());
    o.finish();
  }
  const bool ok = error <= interpret::kReconstructionTolerance;
  err << "reconstruction max error " << error << " (tolerance " << interpret::kReconstructionTolerance << "): "
      << (ok ? "ok" : "FAILED") << '\n';
  ojson top = ojson::array();
  if (a.label < cm.bias.size()) {
    for (const auto& t : interpret::top_contributors(cm, a.label, a.top)) {
      err << "  visit " << (t.visit + 1) << " " << vocab.name(static_cast<std::size_t>(t.code)) << " " << t.value
          << '\n';
      top.push_back({{"visit_index", t.visit + 1}, {"code_index", t.code}, {"value", t.value}});
    }
  }
  ojson resolved = {{"data", a.data},   {"checkpoint", a.checkpoint}, {"vocab", a.vocab}, {"patient", a.patient},
                    {"step", step},     {"label", a.label},           {"top", a.top},     {"out", c.out}};
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(c, "interpret", resolved,
                 {{"prediction", trace.y_hat}, {"reconstruction_error", error}, {"reconstruction_ok", ok}, {"top", top}},
                 secs);
  if (!ok) {
    std::ostringstream msg;
    msg << "reconstruction differs from the model output by " << error;
    throw IntegrityError(msg.str());
  }
  return kExitOk;
}

int cmd_gradcheck(const Common& c, const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const auto kind = parse_model_kind(a.model);
  const auto task = parse_task(a.task);
  if (a.visits == 0) throw ConfigError("--visits must be positive");
  const auto config = tiny_model_config(kind, task, c.seed);
  auto model = make_model(config);
  Rng rng(c.seed);
  randomize_params(model->params(), rng);
  const auto record = random_record(config.dims.r, a.visits, task, config.dims.s, rng);
  const auto report = gradient_check(*model, record, a.dropout, c.seed);
  const bool ok = report.passed();
  {
    Output o(c.out.empty() ? "-" : c.out, out);
    auto& s = o.stream();
    s << "param,size,max_relative_error\n";
    s.precision(6);
    for (const auto& p : report.params) s << p.name << ',' << p.size << ',' << std::scientific << p.max_relative_error << '\n';
    s << "# max " << report.max_relative_error() << ' ' << (ok ? "PASS" : "FAIL") << '\n';
    o.finish();
  }
  err << "gradcheck " << a.model << ": max relative error " << report.max_relative_error() << " (tolerance "
      << kGradcheckTolerance << ")\n";
  ojson resolved = ojson::parse(model_config_to_json(config));
  resolved["visits"] = a.visits;
  resolved["dropout_masks"] = a.dropout;
  resolved["out"] = c.out.empty() ? "-" : c.out;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(c, "gradcheck", resolved, {{"max_relative_error", report.max_relative_error()}, {"passed", ok}}, secs);
  return ok ? kExitOk : kExitFailure;
}

/// Turns a JSON config object into "--key=value" tokens for the subcommand.
std::vector<std::string> config_tokens(const std::string& path, const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    for (auto& ch : flag) ch = ch == '_' ? '-' : ch;
    if (flag == "--config") throw ConfigError("config file may not name another config file");
    if (!sub.get_option_no_throw(flag)) throw ConfigError("config file key '" + key + "' is not an option of " + sub.get_name());
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& v : value) text += (text.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
    } else if (value.is_primitive() && !value.is_null()) {
      text = value.dump();
    } else {
      throw ConfigError("config file key '" + key + "' has an unsupported value");
    }
    tokens.push_back(flag + "=" + text);
  }
  return tokens;
}

void add_common(CLI::App& sub, Common& c, bool out_required) {
  sub.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub.add_option("--config", c.config, "JSON file of option values (flags take precedence)");
  sub.add_option("--manifest", c.manifest, "Manifest path (default <out>.manifest.json)");
  auto* o = sub.add_option("--out", c.out, "Output path, '-' for stdout");
  if (out_required) o->required();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reverse-time attention models for visit sequences", "retain_cli"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  GenerateArgs gen;
  TrainArgs tr;
  EvalArgs ev;
  InterpretArgs in;
  GradcheckArgs gc;

  auto* g = app.add_subcommand("generate", "Write a synthetic case/control cohort as JSONL");
  add_common(*g, common, true);
  g->add_option("--cases", gen.cases, "Number of cases")->capture_default_str();
  g->add_option("--controls-per-case", gen.controls_per_case, "Maximum matched controls per case")->capture_default_str();
  g->add_option("--min-visits", gen.min_visits, "Minimum visits per patient")->capture_default_str();
  g->add_option("--max-visits", gen.max_visits, "Maximum visits per patient")->capture_default_str();
  g->add_option("--motif", gen.motif, "Risk motif: recency or gap")->capture_default_str();
  g->add_option("--motif-codes", gen.motif_codes, "Motif code indices")->delimiter(',')->capture_default_str();
  g->add_option("--window", gen.window, "Motif window in visits")->capture_default_str();
  g->add_option("--gap-days", gen.gap_days, "Gap motif threshold in days")->capture_default_str();
  g->add_option("--decoy-rate", gen.decoy_rate, "Probability a control carries the motif outside the window")
      ->capture_default_str();
  g->add_option("--task", gen.task, "Label layout: l2d or esm")->capture_default_str();
  g->add_option("--vocab-out", gen.vocab_out, "Also write the vocabulary JSON here");

  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint and loss CSV");
  add_common(*t, common, true);
  t->add_option("--data", tr.data, "Cohort JSONL")->required();
  t->add_option("--vocab", tr.vocab, "Vocabulary JSON (default: synthetic 617 codes)");
  t->add_option("--model", tr.model, "retain, retain-ts, lr, mlp, rnn, rnn-attn-mlp, rnn-attn-rnn")
      ->capture_default_str();
  t->add_option("--task", tr.task, "l2d or esm")->capture_default_str();
  t->add_option("--loss-csv", tr.loss_csv, "Loss history CSV (default <out>.loss.csv)");
  t->add_option("--epochs", tr.epochs, "Maximum epochs")->capture_default_str();
  t->add_option("--batch-size", tr.batch_size, "Patients per mini-batch")->capture_default_str();
  t->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--l2", tr.l2, "L2 coefficient (default: 0.01 for lr, 1e-4 otherwise)");
  t->add_option("--dropout-v", tr.dropout_v, "Dropout on visit embeddings (default per model)");
  t->add_option("--dropout-c", tr.dropout_c, "Dropout on context vectors (default per model)");
  t->add_option("--dropout-hidden", tr.dropout_hidden, "Dropout on baseline hidden outputs (default per model)");
  t->add_option("--patience", tr.patience, "Early-stopping patience in epochs, 0 disables")->capture_default_str();
  t->add_option("--clip", tr.clip, "Gradient clipping global norm, 0 disables")->capture_default_str();
  t->add_flag("--paper-dims", tr.paper_dims, "Use m=p=q=128 and baseline hidden 256");
  t->add_option("--m", tr.m, "Embedding size (default 32)");
  t->add_option("--p", tr.p, "Visit-attention GRU size (default 32)");
  t->add_option("--q", tr.q, "Variable-attention GRU size (default 32)");
  t->add_option("--hidden", tr.hidden, "Baseline hidden size (default 32)");
  t->add_option("--window", tr.window, "Pseudo-context window for lr and mlp")->capture_default_str();

  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint and write an EvalReport JSON");
  add_common(*e, common, false);
  e->add_option("--data", ev.data, "Cohort JSONL")->required();
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required();
  e->add_option("--split", ev.split, "train, valid, test or all")->capture_default_str();
  e->add_option("--ks", ev.ks, "Recall@k cut-offs")->delimiter(',')->capture_default_str();
  e->add_flag("--timings", ev.timings, "Include wall-clock timings in the report");

  auto* i = app.add_subcommand("interpret", "Export per-visit, per-code contributions for one patient");
  add_common(*i, common, false);
  i->add_option("--data", in.data, "Cohort JSONL")->required();
  i->add_option("--checkpoint", in.checkpoint, "Checkpoint JSON")->required();
  i->add_option("--vocab", in.vocab, "Vocabulary JSON (default: synthetic 617 codes)");
  i->add_option("--patient", in.patient, "Patient id")->required();
  i->add_option("--step", in.step, "1-based prediction step (default: the final one)");
  i->add_option("--label", in.label, "Label index for the ranked list")->capture_default_str();
  i->add_option("--top", in.top, "Number of ranked contributors printed to stderr")->capture_default_str();

  auto* k = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients at tiny dims");
  add_common(*k, common, false);
  k->add_option("--model", gc.model, "Model kind")->capture_default_str();
  k->add_option("--task", gc.task, "l2d or esm")->capture_default_str();
  k->add_option("--visits", gc.visits, "Visits in the probe record")->capture_default_str();
  k->add_flag("--dropout", gc.dropout, "Check with fixed dropout masks in training mode");

  try {
    std::vector<std::string> argv = args;
    if (!argv.empty()) {
      if (auto* sub = app.get_subcommand_no_throw(argv.front())) {
        std::string config_path;
        for (std::size_t n = 1; n < argv.size(); ++n) {
          if (argv[n] == "--config" && n + 1 < argv.size()) config_path = argv[n + 1];
          if (argv[n].rfind("--config=", 0) == 0) config_path = argv[n].substr(9);
        }
        if (!config_path.empty()) {
          const auto tokens = config_tokens(config_path, *sub);
          argv.insert(argv.begin() + 1, tokens.begin(), tokens.end());
        }
      }
    }
    std::reverse(argv.begin(), argv.end());
    try {
      app.parse(argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::CallForVersion&) {
      out << kVersion << '\n';
      return kExitOk;
    } catch (const CLI::ParseError& ex) {
      err << "usage error: " << ex.what() << '\n';
      if (!app.get_subcommands().empty()) {
        err << app.get_subcommands().front()->help();
      } else {
        err << app.help();
      }
      return kExitUsage;
    }

    if (g->parsed()) return cmd_generate(common, gen, out, err);
    if (t->parsed()) return cmd_train(common, tr, *t, out, err);
    if (e->parsed()) return cmd_eval(common, ev, out, err);
    if (i->parsed()) return cmd_interpret(common, in, out, err);
    if (k->parsed()) return cmd_gradcheck(common, gc, out, err);
    err << "usage error: no subcommand\n";
    return kExitUsage;
  } catch (const ConfigError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const IntegrityError& ex) {
    err << "integrity failure: " << ex.what() << '\n';
    return kExitFailure;
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace retain::cli
