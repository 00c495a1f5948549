#include "pivot/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "pivot/errors.hpp"
#include "pivot/nn/network.hpp"
#include "pivot/parallel.hpp"

namespace pivot {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed * 0x100000001B3ULL + index + 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string num_or_empty(const MeanStd& m, bool std_part) {
  if (m.n == 0) return "";
  return num(std_part ? m.std : m.mean);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string segment_header(const std::string& prefix) {
  std::string h;
  for (Segment s : kSegments) {
    const std::string seg(to_string(s));
    for (const char* q : {"angle", "velocity"}) {
      h += "," + prefix + seg + "_" + q + "_mean," + prefix + seg + "_" + q + "_std";
    }
  }
  return h;
}

std::string segment_cells(const SegmentSummary& s) {
  std::string out;
  for (std::size_t k = 0; k < 3; ++k) {
    out += "," + num_or_empty(s.angle[k], false) + "," + num_or_empty(s.angle[k], true);
    out += "," + num_or_empty(s.velocity[k], false) + "," + num_or_empty(s.velocity[k], true);
  }
  return out;
}

struct TrainEval {
  SegmentMaes maes;
  std::vector<double> per_sequence;
  int train_n = 0;
  int test_n = 0;
  int excluded = 0;
};

double overall_angle_mae(const nn::ModelParams& params, const nn::TrainingSample& s) {
  const nn::Prediction p = nn::forward(params, s.frames);
  double acc = 0.0;
  for (std::size_t j = 0; j < p.alpha.size(); ++j) {
    acc += std::abs(p.alpha[j] - s.alpha[j + static_cast<std::size_t>(p.first_step)]);
  }
  return p.alpha.empty() ? 0.0 : acc / static_cast<double>(p.alpha.size());
}

TrainEval train_and_eval(const nn::Hyper& hyper, const nn::TrainConfig& tc, const std::vector<nn::TrainingSample>& train,
                         const std::vector<nn::TrainingSample>& test, bool per_sequence) {
  TrainEval out;
  const auto train_ok = nn::usable_samples(hyper, train);
  const auto test_ok = nn::usable_samples(hyper, test);
  out.train_n = static_cast<int>(train_ok.size());
  out.test_n = static_cast<int>(test_ok.size());
  out.excluded = static_cast<int>(train.size() + test.size() - train_ok.size() - test_ok.size());
  const nn::TrainResult tr = nn::train(hyper, train_ok, {}, tc);
  out.maes = evaluate_model(tr.params, test_ok);
  if (per_sequence) {
    for (const auto& s : test_ok) out.per_sequence.push_back(overall_angle_mae(tr.params, s));
  }
  return out;
}

struct Condition {
  std::string label;
  nn::Hyper hyper;
  SplitIndices split;
};

std::vector<StudyRow> run_conditions(const StudyConfig& cfg, const Dataset& ds, const std::vector<Condition>& conds) {
  const int repeats = std::max(1, cfg.repeats);
  std::vector<TrainEval> results(conds.size() * static_cast<std::size_t>(repeats));
  std::vector<std::vector<nn::TrainingSample>> train_sets, test_sets;
  for (const auto& c : conds) {
    train_sets.push_back(to_samples(ds, c.split.train));
    test_sets.push_back(to_samples(ds, c.split.test));
  }
  parallel_for(results.size(), cfg.jobs, [&](std::size_t i) {
    const std::size_t c = i / static_cast<std::size_t>(repeats);
    const int k = static_cast<int>(i % static_cast<std::size_t>(repeats));
    nn::TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + static_cast<std::uint64_t>(k);
    results[i] = train_and_eval(conds[c].hyper, tc, train_sets[c], test_sets[c], k == 0);
  });
  std::vector<StudyRow> rows;
  for (std::size_t c = 0; c < conds.size(); ++c) {
    StudyRow row;
    row.label = conds[c].label;
    std::vector<SegmentMaes> runs;
    for (int k = 0; k < repeats; ++k) runs.push_back(results[c * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(k)].maes);
    const TrainEval& first = results[c * static_cast<std::size_t>(repeats)];
    row.train_sequences = first.train_n;
    row.test_sequences = first.test_n;
    row.excluded = first.excluded;
    row.summary = summarize(runs);
    row.per_sequence_angle_mae = first.per_sequence;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::IS: return "IS";
    case Segment::DR: return "DR";
    case Segment::SS: return "SS";
  }
  return "?";
}

SegmentBounds segment(std::span<const double> omega, double threshold, int hold) {
  const int n = static_cast<int>(omega.size());
  if (n == 0) throw RangeError("segment: empty series");
  if (hold < 1) throw RangeError("segment: hold must be >= 1");
  bool found = false;
  int first = n;
  int last_end = n;
  int i = 0;
  while (i < n) {
    if (std::abs(omega[i]) > threshold) {
      int j = i;
      while (j < n && std::abs(omega[j]) > threshold) ++j;
      if (j - i >= hold) {
        if (!found) first = i;
        found = true;
        last_end = j;
      }
      i = j;
    } else {
      ++i;
    }
  }
  if (!found) return {n, n};
  return {first, std::min(n, last_end - 1 + hold)};
}

void SegmentErrorSums::add(std::span<const double> pa, std::span<const double> pw, std::span<const double> ga,
                           std::span<const double> gw, const SegmentBounds& b, int offset) {
  const std::size_t n = ga.size();
  if (gw.size() != n) throw ShapeError("mae: ground-truth angle and velocity differ in length");
  if (offset < 0 || static_cast<std::size_t>(offset) > n || pa.size() != n - static_cast<std::size_t>(offset) ||
      pw.size() != pa.size()) {
    throw ShapeError("mae: predictions cover " + std::to_string(pa.size()) + " ticks from " + std::to_string(offset) +
                     ", ground truth has " + std::to_string(n));
  }
  if (b.is_end < 0 || b.is_end > b.dr_end || static_cast<std::size_t>(b.dr_end) > n) {
    throw ShapeError("mae: segment bounds outside the series");
  }
  const std::array<int, 4> edges = {0, b.is_end, b.dr_end, static_cast<int>(n)};
  for (std::size_t s = 0; s < 3; ++s) {
    for (int t = std::max(edges[s], offset); t < edges[s + 1]; ++t) {
      angle[s] += std::abs(pa[static_cast<std::size_t>(t - offset)] - ga[static_cast<std::size_t>(t)]);
      velocity[s] += std::abs(pw[static_cast<std::size_t>(t - offset)] - gw[static_cast<std::size_t>(t)]);
      ++count[s];
    }
  }
}

void SegmentErrorSums::merge(const SegmentErrorSums& o) {
  for (std::size_t s = 0; s < 3; ++s) {
    angle[s] += o.angle[s];
    velocity[s] += o.velocity[s];
    count[s] += o.count[s];
  }
}

SegmentMaes SegmentErrorSums::mae() const {
  SegmentMaes out;
  for (std::size_t s = 0; s < 3; ++s) {
    if (count[s] == 0) continue;
    out[s].angle = angle[s] / static_cast<double>(count[s]);
    out[s].velocity = velocity[s] / static_cast<double>(count[s]);
  }
  return out;
}

SegmentMaes mae_by_segment(std::span<const double> pa, std::span<const double> pw, std::span<const double> ga,
                           std::span<const double> gw, const SegmentBounds& bounds, int offset) {
  SegmentErrorSums sums;
  sums.add(pa, pw, ga, gw, bounds, offset);
  return sums.mae();
}

SegmentMaes evaluate_model(const nn::ModelParams& params, std::span<const nn::TrainingSample> samples) {
  SegmentErrorSums sums;
  for (const auto& s : samples) {
    const nn::Prediction p = nn::forward(params, s.frames);
    sums.add(p.alpha, p.omega, s.alpha, s.omega, segment(s.omega), p.first_step);
  }
  return sums.mae();
}

MeanStd mean_std(std::span<const double> v) {
  MeanStd m;
  m.n = static_cast<int>(v.size());
  if (v.empty()) return m;
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return m;
}

SegmentSummary summarize(std::span<const SegmentMaes> runs) {
  SegmentSummary s;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> a, w;
    for (const auto& r : runs) {
      if (r[k].angle) a.push_back(*r[k].angle);
      if (r[k].velocity) w.push_back(*r[k].velocity);
    }
    s.angle[k] = mean_std(a);
    s.velocity[k] = mean_std(w);
  }
  return s;
}

std::vector<StudyRow> unseen_object_study(const StudyConfig& cfg, const Dataset& ds) {
  const auto present = ds.objects();
  if (present.size() < 2) throw RangeError("unseen_object_study: dataset needs at least 2 objects");
  std::vector<Condition> conds;
  for (const auto& o : object_table()) {
    if (std::find(present.begin(), present.end(), o.name) == present.end()) continue;
    Condition c{o.name, cfg.hyper, split(ds, LeaveOneObjectOut{o.name})};
    for (int i : c.split.train) {
      if (ds.sequences[static_cast<std::size_t>(i)].meta.scenario.object == o.name) {
        throw IntegrityError("held-out object '" + o.name + "' leaked into training");
      }
    }
    conds.push_back(std::move(c));
  }
  return run_conditions(cfg, ds, conds);
}

std::vector<StudyRow> class_transfer_study(const StudyConfig& cfg, const Dataset& ds) {
  using C = ObjectClass;
  const std::array<std::pair<C, C>, 4> pairs = {{{C::Box, C::Box}, {C::Box, C::Cylinder}, {C::Cylinder, C::Cylinder}, {C::Cylinder, C::Box}}};
  std::vector<Condition> conds;
  for (const auto& [tr, te] : pairs) {
    Condition c{std::string(to_string(tr)) + "->" + std::string(to_string(te)), cfg.hyper,
                split(ds, ClassTransfer{tr, te, cfg.train.seed})};
    for (int i : c.split.train) {
      if (find_object(ds.sequences[static_cast<std::size_t>(i)].meta.scenario.object).cls != tr) {
        throw IntegrityError("class transfer: training split contains the wrong class");
      }
    }
    conds.push_back(std::move(c));
  }
  return run_conditions(cfg, ds, conds);
}

StudyRow random_split_study(const StudyConfig& cfg, const Dataset& ds, std::uint64_t split_seed) {
  std::vector<Condition> conds{{std::string(nn::to_string(cfg.hyper.arch)), cfg.hyper, split(ds, Random80_20{split_seed})}};
  return run_conditions(cfg, ds, conds).front();
}

std::vector<StudyRow> window_ablation(const StudyConfig& cfg, const Dataset& ds, std::span<const int> windows,
                                      std::uint64_t split_seed) {
  const SplitIndices sp = split(ds, Random80_20{split_seed});
  std::vector<Condition> conds;
  for (int w : windows) {
    if (w < 1) throw RangeError("window_ablation: window must be >= 1");
    nn::Hyper h = cfg.hyper;
    h.arch = nn::Architecture::MLP;
    h.window_size = w;
    conds.push_back({"window-" + std::to_string(w), h, sp});
  }
  return run_conditions(cfg, ds, conds);
}

std::vector<Scenario> closed_loop_grid(const ClosedLoopConfig& cfg) {
  if (cfg.objects.empty()) throw RangeError("closed loop: empty object list");
  if (cfg.trials < 1) throw RangeError("closed loop: trials must be >= 1");
  std::vector<Scenario> out;
  std::uint64_t index = 0;
  for (const auto& obj : cfg.objects) {
    find_object(obj);
    for (double ap : cfg.approach_deg) {
      for (double pe : cfg.perturb_deg) {
        for (double g : cfg.goals_deg) {
          for (int k = 0; k < cfg.trials; ++k) {
            Scenario sc;
            sc.object = obj;
            sc.approach_deg = ap;
            sc.perturb_deg = pe;
            sc.protocol = Protocol::AngleGoal;
            sc.stop_deg = g;
            sc.friction = cfg.friction;
            sc.seed = mix_seed(cfg.seed, index++);
            out.push_back(sc);
          }
        }
      }
    }
  }
  return out;
}

namespace {

struct EpisodeRun {
  EpisodeSummary summary;
  SegmentErrorSums tracking;
  EpisodeResult result;
};

std::vector<EpisodeRun> run_grid(const EstimatorFactory& make_estimator, const ClosedLoopConfig& cfg, bool keep) {
  const auto grid = closed_loop_grid(cfg);
  std::vector<EpisodeRun> runs(grid.size());
  const int per_combo = cfg.trials;
  parallel_for(grid.size(), cfg.jobs, [&](std::size_t i) {
    const Scenario& sc = grid[i];
    const Plant plant = make_plant(sc, cfg.gripper, cfg.sim);
    auto est = make_estimator();
    EpisodeConfig ec = cfg.episode;
    ec.sensor.seed = sc.seed;
    EpisodeResult ep = run_episode(plant, sc.phi_start(), *est, *sc.stop_deg, ec);
    EpisodeRun& r = runs[i];
    r.summary = {sc.object, sc.approach_deg, sc.perturb_deg, *sc.stop_deg, static_cast<int>(i % static_cast<std::size_t>(per_combo)),
                 sc.seed, ep.final_alpha_gt, ep.target_error, ep.failure, ep.trace.back().t};
    std::vector<double> pa, pw, ga, gw;
    for (const auto& row : ep.trace) {
      pa.push_back(row.alpha_est);
      pw.push_back(row.omega_est);
      ga.push_back(row.alpha_gt);
      gw.push_back(row.omega_gt);
    }
    r.tracking.add(pa, pw, ga, gw, segment(gw));
    if (keep) r.result = std::move(ep);
  });
  return runs;
}

}  // namespace

ClosedLoopReport closed_loop_suite(const EstimatorFactory& make_estimator, const ClosedLoopConfig& cfg,
                                   const std::string& label) {
  const auto runs = run_grid(make_estimator, cfg, false);
  ClosedLoopReport rep;
  rep.label = label;
  std::vector<double> te_all, te_ok;
  SegmentErrorSums tracking;
  int failures = 0;
  for (const auto& r : runs) {
    rep.episodes.push_back(r.summary);
    te_all.push_back(r.summary.target_error);
    if (r.summary.failure == FailureKind::None) {
      te_ok.push_back(r.summary.target_error);
    } else {
      ++failures;
    }
    tracking.merge(r.tracking);
  }
  rep.target_error = mean_std(te_all);
  rep.target_error_success = mean_std(te_ok);
  rep.failure_rate = runs.empty() ? 0.0 : 100.0 * failures / static_cast<double>(runs.size());
  rep.tracking = tracking.mae();
  return rep;
}

Dataset collect_in_loop(const EstimatorFactory& make_estimator, const ClosedLoopConfig& cfg) {
  const auto grid = closed_loop_grid(cfg);
  auto runs = run_grid(make_estimator, cfg, true);
  Dataset ds;
  ds.stats.requested = static_cast<int>(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string id = "inloop-" + grid[i].object + "-" + std::to_string(cfg.seed) + "-" + std::to_string(i);
    ds.sequences.push_back(sequence_from_episode(runs[i].result, grid[i], id));
  }
  ds.stats.kept = static_cast<int>(ds.sequences.size());
  return ds;
}

FinetuneConfig make_finetune_config(const std::vector<std::string>& objects, std::uint64_t seed) {
  FinetuneConfig cfg;
  cfg.eval.objects = objects;
  cfg.eval.seed = seed;
  cfg.collection.objects = objects;
  cfg.collection.trials = 2;
  cfg.collection.seed = seed + 1000003;
  cfg.train.epochs = 20;
  cfg.train.seed = seed;
  return cfg;
}

FinetuneResult finetune_experiment(const nn::ModelParams& base, const FinetuneConfig& cfg) {
  auto factory_for = [](const nn::ModelParams& p) -> EstimatorFactory {
    return [&p] { return std::make_unique<ModelEstimator>(p); };
  };
  FinetuneResult res;
  res.before = closed_loop_suite(factory_for(base), cfg.eval, "before");
  const Dataset in_loop = collect_in_loop(factory_for(base), cfg.collection);
  res.in_loop_sequences = static_cast<int>(in_loop.sequences.size());
  std::vector<int> all(in_loop.sequences.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const auto samples = to_samples(in_loop, all);
  res.tuned = nn::continue_training(base, samples, {}, cfg.train).params;
  res.after = closed_loop_suite(factory_for(res.tuned), cfg.eval, "after");
  return res;
}

void write_study_table(const std::vector<StudyRow>& rows, const fs::path& path) {
  std::string text = "label,train_sequences,test_sequences,excluded" + segment_header("") + "\n";
  for (const auto& r : rows) {
    text += r.label + "," + std::to_string(r.train_sequences) + "," + std::to_string(r.test_sequences) + "," +
            std::to_string(r.excluded) + segment_cells(r.summary) + "\n";
  }
  write_file(path, text);
}

void write_closed_loop_table(const std::vector<ClosedLoopReport>& reports, const fs::path& path) {
  std::string text =
      "label,episodes,te_mean,te_std,te_success_mean,te_success_std,failure_rate_percent" + segment_header("tracking_") + "\n";
  for (const auto& r : reports) {
    std::array<SegmentMaes, 1> one{r.tracking};
    text += r.label + "," + std::to_string(r.episodes.size()) + "," + num_or_empty(r.target_error, false) + "," +
            num_or_empty(r.target_error, true) + "," + num_or_empty(r.target_error_success, false) + "," +
            num_or_empty(r.target_error_success, true) + "," + num(r.failure_rate) + segment_cells(summarize(one)) + "\n";
  }
  write_file(path, text);
}

void write_episode_table(const ClosedLoopReport& report, const fs::path& path) {
  std::string text = "object,approach_deg,perturb_deg,goal_deg,trial,seed,final_alpha,target_error,failure,duration_s\n";
  for (const auto& e : report.episodes) {
    text += e.object + "," + num(e.approach_deg) + "," + num(e.perturb_deg) + "," + num(e.goal_deg) + "," +
            std::to_string(e.trial) + "," + std::to_string(e.seed) + "," + num(e.final_alpha) + "," +
            num(e.target_error) + "," + std::string(to_string(e.failure)) + "," + num(e.duration_s) + "\n";
  }
  write_file(path, text);
}

void write_prediction_traces(const nn::ModelParams& params, std::span<const nn::TrainingSample> samples,
                             const fs::path& path) {
  std::string text = "id,t,alpha_gt,alpha_pred,omega_gt,omega_pred,segment\n";
  for (const auto& s : samples) {
    const nn::Prediction p = nn::forward(params, s.frames);
    const SegmentBounds b = segment(s.omega);
    for (std::size_t j = 0; j < p.alpha.size(); ++j) {
      const int t = static_cast<int>(j) + p.first_step;
      const Segment seg = t < b.is_end ? Segment::IS : (t < b.dr_end ? Segment::DR : Segment::SS);
      text += s.id + "," + num(t / 60.0) + "," + num(s.alpha[static_cast<std::size_t>(t)]) + "," + num(p.alpha[j]) +
              "," + num(s.omega[static_cast<std::size_t>(t)]) + "," + num(p.omega[j]) + "," +
              std::string(to_string(seg)) + "\n";
    }
  }
  write_file(path, text);
}

}  // namespace pivot
