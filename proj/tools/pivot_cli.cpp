// pivot: collect data, train estimators, run studies and single grip episodes.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pivot/controller.hpp"
#include "pivot/dataset.hpp"
#include "pivot/errors.hpp"
#include "pivot/eval.hpp"
#include "pivot/nn/checkpoint.hpp"
#include "pivot/nn/training.hpp"
#include "pivot/objects.hpp"
#include "pivot/scenario.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pivot;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// flat key -> string settings; config file first, then flags, then --set
class Settings {
 public:
  void load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(path.string() + ": expected a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (v.is_string()) {
        values_[k] = v.get<std::string>();
      } else if (v.is_array()) {
        std::string joined;
        for (const auto& e : v) {
          if (!joined.empty()) joined += ",";
          joined += e.is_string() ? e.get<std::string>() : e.dump();
        }
        values_[k] = joined;
      } else {
        values_[k] = v.dump();
      }
    }
  }
  void set(const std::string& k, const std::string& v) { values_[k] = v; }
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    values_[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  bool has(const std::string& k) const {
    used_.insert(k);
    return values_.count(k) != 0;
  }

  std::string str(const std::string& k, const std::string& def = "") const {
    used_.insert(k);
    auto it = values_.find(k);
    return it == values_.end() ? def : it->second;
  }
  std::string required(const std::string& k) const {
    if (!has(k)) throw UsageError("--" + k + " is required");
    return str(k);
  }
  double num(const std::string& k, double def) const {
    if (!has(k)) return def;
    return parse_double(k, str(k));
  }
  int integer(const std::string& k, int def) const {
    if (!has(k)) return def;
    const double v = num(k, def);
    if (v != static_cast<int>(v)) throw UsageError(k + ": expected an integer");
    return static_cast<int>(v);
  }
  std::uint64_t seed(const std::string& k = "seed") const {
    const std::string s = required(k);
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError(k + ": expected a non-negative integer, got '" + s + "'");
    }
  }
  std::vector<double> nums(const std::string& k, std::vector<double> def) const {
    if (!has(k)) return def;
    std::vector<double> out;
    for (const auto& part : split_list(str(k))) out.push_back(parse_double(k, part));
    return out;
  }
  std::vector<std::string> list(const std::string& k) const { return split_list(str(k)); }

  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

 private:
  static double parse_double(const std::string& k, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError(k + ": expected a number, got '" + s + "'");
    }
  }
  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

struct Run {
  std::string command;
  Settings settings;
  fs::path out;
  std::vector<std::string> outputs;
  int jobs = 1;

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
  void write_manifest() const {
    json j;
    j["command"] = command;
    j["settings"] = settings.to_json();
    j["outputs"] = outputs;
    std::ofstream f(out / (command + "-manifest.json"));
    f << j.dump(2) << "\n";
    if (!f) throw Error("cannot write run manifest");
  }
};

std::vector<std::string> resolve_objects(const Settings& s) {
  const std::string which = s.str("objects", "all");
  if (which == "all") return object_names();
  std::vector<std::string> out;
  for (const auto& name : s.list("objects")) out.push_back(find_object(name).name);
  if (out.empty()) throw UsageError("--objects: empty list");
  return out;
}

nn::Hyper hyper_from(const Settings& s) {
  const auto arch = nn::architecture_from_string(s.str("arch", "lstm"));
  nn::Hyper h;
  switch (arch) {
    case nn::Architecture::LSTM: h = nn::lstm_hyper(); break;
    case nn::Architecture::GRU: h = nn::gru_hyper(); break;
    case nn::Architecture::RNN: h = nn::rnn_hyper(); break;
    case nn::Architecture::MLP: h = nn::mlp_hyper(); break;
  }
  h.mode = nn::output_mode_from_string(s.str("mode", "both"));
  h.window_size = s.integer("window", h.window_size);
  h.hidden_size = s.integer("hidden", h.hidden_size);
  h.num_layers = s.integer("layers", h.num_layers);
  h.head_hidden = s.integer("head_hidden", h.recurrent() ? h.hidden_size : h.head_hidden);
  h.head_layers = s.integer("head_layers", h.head_layers);
  h.dropout = s.num("dropout", h.dropout);
  return h;
}

nn::TrainConfig train_config_from(const Settings& s) {
  nn::TrainConfig tc;
  tc.epochs = s.integer("epochs", tc.epochs);
  tc.batch_size = s.integer("batch_size", tc.batch_size);
  tc.lr = s.num("lr", tc.lr);
  tc.weight_decay = s.num("weight_decay", tc.weight_decay);
  return tc;
}

ClosedLoopConfig closed_loop_from(const Settings& s, const Run& run) {
  ClosedLoopConfig c;
  c.objects = resolve_objects(s);
  c.approach_deg = s.nums("approach", c.approach_deg);
  c.perturb_deg = s.nums("perturb", c.perturb_deg);
  c.goals_deg = s.nums("goals", c.goals_deg);
  c.trials = s.integer("trials", c.trials);
  c.friction = friction_variant_from_string(s.str("friction", "nominal"));
  c.jobs = run.jobs;
  return c;
}

Dataset require_dataset(const Settings& s) {
  const fs::path dir = s.required("dataset");
  if (!fs::exists(dir / "manifest.json")) throw UsageError("dataset not found: " + dir.string());
  return load_dataset(dir);
}

void cmd_collect(Run& run) {
  const Settings& s = run.settings;
  const std::uint64_t seed = s.seed();
  const auto objects = resolve_objects(s);
  const std::string proto = s.str("protocol", "all");
  std::vector<CollectionPlan> plans;
  if (proto == "rotate-to-stop" || proto == "all") plans.push_back(rotate_to_stop_plan(seed));
  if (proto == "angle-goal" || proto == "all") plans.push_back(angle_goal_plan(seed));
  if (plans.empty()) throw UsageError("--protocol: expected rotate-to-stop, angle-goal or all");
  CollectOptions opt;
  opt.jobs = run.jobs;
  std::vector<Dataset> parts;
  for (auto& plan : plans) {
    if (s.has("repeats")) plan.repeats = s.integer("repeats", plan.repeats);
    if (s.has("friction")) plan.friction = {friction_variant_from_string(s.str("friction"))};
    parts.push_back(collect(plan, objects, opt));
  }
  Dataset ds = merge(parts);
  save_dataset(ds, run.output("dataset"));

  std::map<std::string, std::map<std::string, int>> counts;
  for (const auto& seq : ds.sequences) ++counts[std::string(to_string(seq.meta.scenario.protocol))][seq.meta.scenario.object];
  for (const auto& [p, per_obj] : counts) {
    std::cout << p << ":\n";
    for (const auto& [o, n] : per_obj) std::cout << "  " << o << " " << n << "\n";
  }
  std::cout << "kept " << ds.stats.kept << " of " << ds.stats.requested << "\n";
  for (const auto& [reason, n] : ds.stats.filtered) std::cout << "  filtered " << reason << ": " << n << "\n";
}

void cmd_train(Run& run) {
  const Settings& s = run.settings;
  const std::uint64_t seed = s.seed();
  const Dataset ds = require_dataset(s);
  const nn::Hyper hyper = hyper_from(s);
  nn::TrainConfig tc = train_config_from(s);
  tc.seed = seed;

  const double val_fraction = s.num("validation", 0.2);
  std::vector<int> tr_idx, va_idx;
  if (val_fraction > 0.0) {
    const auto sp = split(ds, Random80_20{seed});
    tr_idx = sp.train;
    va_idx = sp.test;
  } else {
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) tr_idx.push_back(static_cast<int>(i));
  }
  const auto train_set = nn::usable_samples(hyper, to_samples(ds, tr_idx));
  const auto val_set = nn::usable_samples(hyper, to_samples(ds, va_idx));
  if (train_set.empty()) throw RangeError("no training sequences long enough for the model");

  const auto res = nn::train(hyper, train_set, val_set, tc, [](const nn::EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss;
    if (r.val_alpha_mae >= 0) std::cerr << " val alpha " << r.val_alpha_mae << " omega " << r.val_omega_mae;
    std::cerr << "\n";
  });
  nn::save_checkpoint(res.params, run.output("model.ckpt"));
  run.outputs.push_back("model.ckpt.bin");

  std::ofstream h(run.output("history.csv"));
  h << "epoch,train_loss,val_alpha_mae,val_omega_mae\n";
  h.precision(17);
  for (const auto& r : res.history) h << r.epoch << "," << r.train_loss << "," << r.val_alpha_mae << "," << r.val_omega_mae << "\n";
  if (!h) throw Error("cannot write history");
  std::cout << "trained " << nn::to_string(hyper.arch) << " (" << nn::to_string(hyper.mode) << ") on "
            << train_set.size() << " sequences, final loss " << res.final_loss << "\n";
}

EstimatorFactory estimator_factory(const Settings& s, std::shared_ptr<nn::ModelParams>& holder, std::string& label) {
  if (s.has("checkpoint")) {
    holder = std::make_shared<nn::ModelParams>(nn::load_checkpoint(s.str("checkpoint")));
    label = std::string(nn::to_string(holder->hyper.arch));
    std::shared_ptr<nn::ModelParams> p = holder;
    return [p] { return std::make_unique<ModelEstimator>(*p); };
  }
  const std::string est = s.str("estimator", "");
  if (est == "oracle") {
    label = "oracle";
    return [] { return std::make_unique<OracleEstimator>(); };
  }
  throw UsageError("need --checkpoint <file> or --estimator oracle");
}

void cmd_eval(Run& run) {
  const Settings& s = run.settings;
  const std::string study = s.required("study");
  if (study == "closed-loop") {
    std::shared_ptr<nn::ModelParams> holder;
    std::string label;
    const auto factory = estimator_factory(s, holder, label);
    ClosedLoopConfig c = closed_loop_from(s, run);
    c.seed = s.has("seed") ? s.seed() : 0;
    const auto rep = closed_loop_suite(factory, c, label);
    write_closed_loop_table({rep}, run.output("closed_loop.csv"));
    write_episode_table(rep, run.output("episodes.csv"));
    std::cout << label << ": TE " << rep.target_error.mean << " +- " << rep.target_error.std << " deg, FR "
              << rep.failure_rate << "% over " << rep.episodes.size() << " episodes\n";
    return;
  }
  if (study == "finetune") {
    if (!s.has("checkpoint")) throw UsageError("--study finetune needs --checkpoint");
    const auto base = nn::load_checkpoint(s.str("checkpoint"));
    const std::uint64_t seed = s.has("seed") ? s.seed() : 0;
    FinetuneConfig fc = make_finetune_config(resolve_objects(s), seed);
    fc.eval = closed_loop_from(s, run);
    fc.eval.seed = seed;
    fc.collection.jobs = run.jobs;
    fc.train.epochs = s.integer("epochs", fc.train.epochs);
    fc.train.lr = s.num("lr", fc.train.lr);
    const auto res = finetune_experiment(base, fc);
    write_closed_loop_table({res.before, res.after}, run.output("finetune.csv"));
    nn::save_checkpoint(res.tuned, run.output("finetuned.ckpt"));
    run.outputs.push_back("finetuned.ckpt.bin");
    std::cout << "before TE " << res.before.target_error.mean << " FR " << res.before.failure_rate << "%\n"
              << "after  TE " << res.after.target_error.mean << " FR " << res.after.failure_rate << "%\n"
              << "in-loop sequences " << res.in_loop_sequences << "\n";
    return;
  }

  const Dataset ds = require_dataset(s);
  StudyConfig sc;
  sc.hyper = hyper_from(s);
  sc.train = train_config_from(s);
  sc.train.seed = s.seed();
  sc.repeats = s.integer("repeats", sc.repeats);
  sc.jobs = run.jobs;
  std::vector<StudyRow> rows;
  if (study == "unseen-object") {
    rows = unseen_object_study(sc, ds);
  } else if (study == "class-transfer") {
    rows = class_transfer_study(sc, ds);
  } else if (study == "random-split") {
    rows = {random_split_study(sc, ds, s.has("split_seed") ? static_cast<std::uint64_t>(s.integer("split_seed", 0)) : sc.train.seed)};
  } else if (study == "window-ablation") {
    std::vector<int> windows;
    for (double w : s.nums("windows", {5, 15, 30, 60, 90})) windows.push_back(static_cast<int>(w));
    rows = window_ablation(sc, ds, windows, sc.train.seed);
  } else {
    throw UsageError("unknown study '" + study +
                     "' (unseen-object, class-transfer, random-split, window-ablation, closed-loop, finetune)");
  }
  write_study_table(rows, run.output(study + ".csv"));
  for (const auto& r : rows) {
    std::cout << r.label;
    for (std::size_t k = 0; k < 3; ++k) {
      std::cout << "  " << to_string(kSegments[k]) << " ";
      if (r.summary.angle[k].n) {
        std::cout << r.summary.angle[k].mean;
      } else {
        std::cout << "-";
      }
    }
    std::cout << "\n";
  }
}

void cmd_control(Run& run) {
  const Settings& s = run.settings;
  const double goal = s.num("goal", std::nan(""));
  if (!s.has("goal")) throw UsageError("--goal is required");
  if (!(goal > 0.0 && goal <= 180.0)) throw RangeError("goal " + s.str("goal") + " outside (0, 180]");
  std::shared_ptr<nn::ModelParams> holder;
  std::string label;
  const auto factory = estimator_factory(s, holder, label);

  Scenario sc;
  sc.object = find_object(s.str("object", "Toothpaste")).name;
  sc.approach_deg = s.num("approach", 0.0);
  sc.perturb_deg = s.num("perturb", 0.0);
  sc.protocol = Protocol::AngleGoal;
  sc.stop_deg = goal;
  sc.friction = friction_variant_from_string(s.str("friction", "nominal"));
  sc.seed = s.has("seed") ? s.seed() : 0;
  const Plant plant = make_plant(sc);
  EpisodeConfig ec;
  ec.sensor.seed = sc.seed;
  auto est = factory();
  const EpisodeResult ep = run_episode(plant, sc.phi_start(), *est, goal, ec);
  save_episode_trace(ep, run.output("trace.csv"));
  std::cout << "final alpha " << ep.final_alpha_gt << " goal " << goal << " TE " << ep.target_error << " deg";
  if (ep.failure != FailureKind::None) std::cout << " (" << to_string(ep.failure) << ")";
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gravitational pivoting simulator and estimator toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config, out_dir;
  std::vector<std::string> overrides;
  int jobs = 1;
  app.add_option("--config", config, "JSON settings file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "key=value override, repeatable");
  app.add_option("--out", out_dir, "output directory (default $PIVOT_OUTPUT_ROOT/<command> or runs/<command>)");
  app.add_option("--jobs,-j", jobs, "worker threads")->check(CLI::PositiveNumber);

  // every flag lands in the settings map under its long name
  std::map<std::string, std::string> flags;
  auto opt = [&](CLI::App* sub, const std::string& name, const std::string& help) {
    sub->add_option("--" + name, flags[sub->get_name() + "." + name], help);
  };

  auto* collect_cmd = app.add_subcommand("collect", "simulate a collection plan and write a dataset");
  opt(collect_cmd, "protocol", "rotate-to-stop, angle-goal or all");
  opt(collect_cmd, "objects", "all or a comma list of object names");
  opt(collect_cmd, "seed", "plan seed (required)");
  opt(collect_cmd, "repeats", "repeats per parameter combination");
  opt(collect_cmd, "friction", "nominal or taped");

  auto* train_cmd = app.add_subcommand("train", "train an estimator on a dataset");
  for (const char* n : {"dataset", "arch", "mode", "window", "hidden", "layers", "head_hidden", "head_layers", "dropout",
                        "epochs", "batch_size", "lr", "weight_decay", "seed", "validation"}) {
    opt(train_cmd, n, "");
  }

  auto* eval_cmd = app.add_subcommand("eval", "run a study and write its tables");
  for (const char* n : {"study", "dataset", "checkpoint", "estimator", "arch", "mode", "window", "windows", "hidden",
                        "layers", "head_hidden", "head_layers", "dropout", "epochs", "batch_size", "lr", "weight_decay",
                        "seed", "split_seed", "repeats", "objects", "approach", "perturb", "goals", "trials", "friction"}) {
    opt(eval_cmd, n, "");
  }

  auto* control_cmd = app.add_subcommand("control", "run one grip episode to a goal angle");
  for (const char* n : {"goal", "estimator", "checkpoint", "object", "approach", "perturb", "friction", "seed"}) {
    opt(control_cmd, n, "");
  }

  CLI11_PARSE(app, argc, argv);

  CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.command = sub->get_name();
  run.jobs = jobs;
  try {
    if (!config.empty()) run.settings.load_file(config);
    for (const auto& [key, value] : flags) {
      const auto dot = key.find('.');
      const std::string owner = key.substr(0, dot), name = key.substr(dot + 1);
      if (owner == run.command && sub->count("--" + name) > 0) run.settings.set(name, value);
    }
    for (const auto& kv : overrides) run.settings.apply_override(kv);

    if (!out_dir.empty()) {
      run.out = out_dir;
    } else if (const char* root = std::getenv("PIVOT_OUTPUT_ROOT"); root && *root) {
      run.out = fs::path(root) / run.command;
    } else {
      run.out = fs::path("runs") / run.command;
    }
    fs::create_directories(run.out);

    if (run.command == "collect") cmd_collect(run);
    if (run.command == "train") cmd_train(run);
    if (run.command == "eval") cmd_eval(run);
    if (run.command == "control") cmd_control(run);

    for (const auto& k : run.settings.unused()) std::cerr << "warning: setting '" << k << "' was not used\n";
    run.write_manifest();
    std::cout << "wrote " << run.out.string() << "\n";
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
