#include "pivot/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pivot/errors.hpp"
#include "pivot/filters.hpp"
#include "pivot/parallel.hpp"

namespace pivot {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string_view protocol_tag(Protocol p) { return p == Protocol::RotateToStop ? "rts" : "ag"; }

void append_double(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ParseError(where + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

int parse_int(std::string_view s, const std::string& where) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ParseError(where + ": bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out.push_back(',');
    out += cols[i];
  }
  return out;
}

void append_row(std::string& out, const TactileFrame& f, int cmd, double alpha, double omega) {
  append_double(out, f.t);
  for (double c : f.channels) {
    out.push_back(',');
    append_double(out, c);
  }
  out.push_back(',');
  out += std::to_string(cmd);
  out.push_back(',');
  append_double(out, alpha);
  out.push_back(',');
  append_double(out, omega);
}

TrajectorySequence build_sequence(const std::vector<SimState>& states, std::vector<TactileFrame> frames,
                                  SequenceMeta meta) {
  TrajectorySequence seq;
  seq.meta = std::move(meta);
  seq.frames = std::move(frames);
  std::vector<double> raw;
  raw.reserve(states.size());
  for (const auto& s : states) {
    raw.push_back(s.alpha);
    seq.grip_cmd.push_back(s.grip_cmd);
  }
  const AnnotatedTrack track = annotate_ground_truth(raw);
  seq.alpha_gt = track.alpha;
  seq.omega_gt = track.omega;
  seq.validate();
  return seq;
}

json plan_to_json(const CollectionPlan& p) {
  json j;
  j["protocol"] = std::string(to_string(p.protocol));
  j["approach_deg"] = p.approach_deg;
  j["perturb_deg"] = p.perturb_deg;
  j["stop_deg"] = p.stop_deg;
  j["repeats"] = p.repeats;
  json fr = json::array();
  for (auto v : p.friction) fr.push_back(std::string(to_string(v)));
  j["friction"] = fr;
  j["seed"] = p.seed;
  return j;
}

CollectionPlan plan_from_json(const json& j) {
  CollectionPlan p;
  p.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  p.approach_deg = j.at("approach_deg").get<std::vector<double>>();
  p.perturb_deg = j.at("perturb_deg").get<std::vector<double>>();
  p.stop_deg = j.at("stop_deg").get<std::vector<double>>();
  p.repeats = j.at("repeats").get<int>();
  p.friction.clear();
  for (const auto& v : j.at("friction")) p.friction.push_back(friction_variant_from_string(v.get<std::string>()));
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

json meta_to_json(const SequenceMeta& m, const std::string& file, int rows) {
  const Scenario& sc = m.scenario;
  json j;
  j["id"] = m.id;
  j["file"] = file;
  j["rows"] = rows;
  j["object"] = sc.object;
  j["protocol"] = std::string(to_string(sc.protocol));
  j["approach_deg"] = sc.approach_deg;
  j["perturb_deg"] = sc.perturb_deg;
  j["stop_deg"] = sc.stop_deg ? json(*sc.stop_deg) : json(nullptr);
  j["friction"] = std::string(to_string(sc.friction));
  j["seed"] = sc.seed;
  j["sample_rate"] = m.sample_rate;
  j["open_cmd"] = m.open_cmd;
  return j;
}

SequenceMeta meta_from_json(const json& j) {
  SequenceMeta m;
  m.id = j.at("id").get<std::string>();
  Scenario& sc = m.scenario;
  sc.object = j.at("object").get<std::string>();
  sc.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  sc.approach_deg = j.at("approach_deg").get<double>();
  sc.perturb_deg = j.at("perturb_deg").get<double>();
  if (!j.at("stop_deg").is_null()) sc.stop_deg = j.at("stop_deg").get<double>();
  sc.friction = friction_variant_from_string(j.at("friction").get<std::string>());
  sc.seed = j.at("seed").get<std::uint64_t>();
  m.sample_rate = j.at("sample_rate").get<double>();
  m.open_cmd = j.at("open_cmd").get<int>();
  return m;
}

TrajectorySequence read_sequence_file(const fs::path& path, SequenceMeta meta, int rows) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("missing sequence file " + path.string());
  const std::string name = path.string();
  const auto cols = sequence_columns();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name + ":1: empty file");
  if (line != join(cols)) throw ParseError(name + ":1: unexpected header");

  TrajectorySequence seq;
  seq.meta = std::move(meta);
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    const auto fields = split_commas(line);
    if (fields.size() != cols.size()) {
      throw ParseError(where + ": expected " + std::to_string(cols.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    TactileFrame f;
    f.t = parse_double(fields[0], where);
    for (int c = 0; c < kNumChannels; ++c) f.channels[c] = parse_double(fields[1 + c], where);
    seq.frames.push_back(f);
    seq.grip_cmd.push_back(parse_int(fields[1 + kNumChannels], where));
    seq.alpha_gt.push_back(parse_double(fields[2 + kNumChannels], where));
    seq.omega_gt.push_back(parse_double(fields[3 + kNumChannels], where));
  }
  if (seq.length() != rows) {
    throw ParseError(name + ":" + std::to_string(lineno) + ": file has " + std::to_string(seq.length()) +
                     " rows, manifest says " + std::to_string(rows));
  }
  return seq;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void CollectionPlan::validate() const {
  if (approach_deg.empty() || perturb_deg.empty()) throw RangeError("plan: approach and perturb sets must be non-empty");
  if (protocol == Protocol::AngleGoal && stop_deg.empty()) throw RangeError("plan: angle-goal needs stop angles");
  if (repeats < 1) throw RangeError("plan: repeats must be >= 1");
  if (friction.empty()) throw RangeError("plan: at least one friction variant");
  for (double s : stop_deg) {
    if (!(s > 0.0 && s <= 180.0)) throw RangeError("plan: stop angle outside (0, 180]");
  }
}

CollectionPlan rotate_to_stop_plan(std::uint64_t seed) {
  CollectionPlan p;
  p.protocol = Protocol::RotateToStop;
  p.approach_deg = {-30, -15, 0, 15, 30};
  p.perturb_deg = {-45, 0, 15, 30, 45, 60};
  p.repeats = 1;
  p.seed = seed;
  return p;
}

CollectionPlan angle_goal_plan(std::uint64_t seed) {
  CollectionPlan p;
  p.protocol = Protocol::AngleGoal;
  p.approach_deg = {-15, 0};
  p.perturb_deg = {0, 30, 45, 60};
  p.stop_deg = {15, 30, 45};
  p.repeats = 2;
  p.seed = seed;
  return p;
}

std::vector<Scenario> generate_plan(const CollectionPlan& plan, std::span<const std::string> objects) {
  plan.validate();
  if (objects.empty()) throw RangeError("generate_plan: empty object set");
  for (const auto& o : objects) find_object(o);
  const std::vector<double> stops =
      plan.protocol == Protocol::AngleGoal ? plan.stop_deg : std::vector<double>{std::nan("")};
  std::vector<Scenario> out;
  std::uint64_t index = 0;
  for (const auto& obj : objects) {
    for (auto fr : plan.friction) {
      for (double ap : plan.approach_deg) {
        for (double pe : plan.perturb_deg) {
          for (double st : stops) {
            for (int r = 0; r < plan.repeats; ++r) {
              Scenario sc;
              sc.object = obj;
              sc.approach_deg = ap;
              sc.perturb_deg = pe;
              sc.protocol = plan.protocol;
              if (plan.protocol == Protocol::AngleGoal) sc.stop_deg = st;
              sc.friction = fr;
              sc.seed = splitmix64(plan.seed * 0x100000001B3ULL + index);
              out.push_back(sc);
              ++index;
            }
          }
        }
      }
    }
  }
  return out;
}

void TrajectorySequence::validate() const {
  const std::size_t n = frames.size();
  if (grip_cmd.size() != n || alpha_gt.size() != n || omega_gt.size() != n) {
    throw ShapeError("sequence '" + meta.id + "': per-tick arrays differ in length");
  }
}

std::vector<std::string> Dataset::objects() const {
  std::vector<std::string> out;
  for (const auto& s : sequences) {
    if (std::find(out.begin(), out.end(), s.meta.scenario.object) == out.end()) out.push_back(s.meta.scenario.object);
  }
  return out;
}

CollectOutcome collect_scenario(const Scenario& sc, const std::string& id, const CollectOptions& opt) {
  CollectOutcome out;
  const Plant plant = make_plant(sc, opt.gripper, opt.sim);
  const double phi0 = sc.phi_start();
  SensorConfig sensor = opt.sensor;
  sensor.seed = sc.seed;
  SequenceMeta meta;
  meta.id = id;
  meta.scenario = sc;

  std::vector<SimState> states;
  std::vector<TactileFrame> frames;
  if (sc.protocol == Protocol::RotateToStop) {
    const int slip = slip_command(plant, phi0);
    const int hold = hold_command(plant, phi0, opt.hold_margin);
    const int open = std::max(0, slip - opt.open_below_slip);
    meta.open_cmd = open;
    const RawTrajectory raw =
        simulate_episode(plant, initial_state(plant, phi0, hold), open_once_policy(open), opt.episode.timing);
    if (raw.timed_out) {
      out.reason = "timeout";
      return out;
    }
    states = raw.states;
    frames = render_sequence(states, plant, sensor);
  } else {
    if (!sc.stop_deg) throw RangeError("angle-goal scenario without stop angle");
    EpisodeConfig ec = opt.episode;
    ec.sensor = sensor;
    ec.hold_margin = opt.hold_margin;
    OracleEstimator oracle;
    EpisodeResult ep = run_episode(plant, phi0, oracle, *sc.stop_deg, ec);
    if (ep.failure != FailureKind::None) {
      out.reason = std::string(to_string(ep.failure));
      return out;
    }
    if (ep.target_error > opt.goal_tolerance_deg) {
      out.reason = "target-miss";
      return out;
    }
    states = std::move(ep.states);
    frames = std::move(ep.frames);
  }
  for (std::size_t i = 1; i < states.size(); ++i) {
    if (states[i].alpha < states[i - 1].alpha - 1e-9) {
      out.reason = "non-monotone";
      return out;
    }
  }
  out.sequence = build_sequence(states, std::move(frames), std::move(meta));
  out.kept = true;
  return out;
}

Dataset collect(const CollectionPlan& plan, std::span<const std::string> objects, const CollectOptions& opt) {
  const auto scenarios = generate_plan(plan, objects);
  std::vector<CollectOutcome> outcomes(scenarios.size());
  std::vector<std::string> ids(scenarios.size());
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s-%s-%llu-%05zu", scenarios[i].object.c_str(),
                  std::string(protocol_tag(plan.protocol)).c_str(), static_cast<unsigned long long>(plan.seed), i);
    ids[i] = buf;
  }
  parallel_for(scenarios.size(), opt.jobs, [&](std::size_t i) {
    try {
      outcomes[i] = collect_scenario(scenarios[i], ids[i], opt);
    } catch (const std::exception& e) {
      outcomes[i] = CollectOutcome{};
      outcomes[i].reason = std::string("error: ") + e.what();
    }
  });

  Dataset ds;
  ds.plans.push_back(plan);
  ds.stats.requested = static_cast<int>(scenarios.size());
  for (auto& o : outcomes) {
    if (o.kept) {
      ds.sequences.push_back(std::move(o.sequence));
    } else {
      ++ds.stats.filtered[o.reason];
    }
  }
  ds.stats.kept = static_cast<int>(ds.sequences.size());
  return ds;
}

Dataset merge(std::span<const Dataset> parts) {
  Dataset out;
  std::set<std::string> seen;
  for (const auto& d : parts) {
    out.plans.insert(out.plans.end(), d.plans.begin(), d.plans.end());
    for (const auto& s : d.sequences) {
      if (!seen.insert(s.meta.id).second) throw IntegrityError("duplicate sequence id '" + s.meta.id + "'");
      out.sequences.push_back(s);
    }
    out.stats.requested += d.stats.requested;
    for (const auto& [k, v] : d.stats.filtered) out.stats.filtered[k] += v;
  }
  out.stats.kept = static_cast<int>(out.sequences.size());
  return out;
}

TrajectorySequence sequence_from_episode(const EpisodeResult& ep, const Scenario& sc, const std::string& id) {
  SequenceMeta meta;
  meta.id = id;
  meta.scenario = sc;
  return build_sequence(ep.states, ep.frames, std::move(meta));
}

std::vector<std::string> sequence_columns() {
  std::vector<std::string> cols{"t"};
  for (int c = 0; c < kNumChannels; ++c) cols.push_back(channel_column(c));
  cols.insert(cols.end(), {"grip_cmd", "alpha_gt", "omega_gt"});
  return cols;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "sequences");
  for (const auto& entry : fs::directory_iterator(dir / "sequences")) {
    if (entry.path().extension() == ".csv") fs::remove(entry.path());
  }
  fs::remove(dir / "manifest.json");

  write_text(dir / "channels.csv", channel_layout_csv());
  const std::string header = join(sequence_columns()) + "\n";
  json seqs = json::array();
  for (const auto& s : ds.sequences) {
    s.validate();
    const std::string file = "sequences/" + s.meta.id + ".csv";
    std::string text = header;
    for (int i = 0; i < s.length(); ++i) {
      append_row(text, s.frames[i], s.grip_cmd[i], s.alpha_gt[i], s.omega_gt[i]);
      text.push_back('\n');
    }
    write_text(dir / file, text);
    seqs.push_back(meta_to_json(s.meta, file, s.length()));
  }

  json j;
  j["format"] = "pivot-dataset";
  j["version"] = std::to_string(kDatasetMajorVersion) + "." + std::to_string(kDatasetMinorVersion);
  j["sample_rate"] = 60.0;
  j["channel_layout"] = "channels.csv";
  j["columns"] = sequence_columns();
  json objs = json::array();
  for (const auto& o : object_table()) {
    objs.push_back({{"name", o.name},
                    {"class", std::string(to_string(o.cls))},
                    {"mass_kg", o.mass},
                    {"length_m", o.length},
                    {"width_m", o.width},
                    {"depth_m", o.depth},
                    {"mu_static", o.mu_static},
                    {"mu_kinetic", o.mu_kinetic}});
  }
  j["objects"] = objs;
  json plans = json::array();
  for (const auto& p : ds.plans) plans.push_back(plan_to_json(p));
  j["plans"] = plans;
  json filtered = json::object();
  for (const auto& [k, v] : ds.stats.filtered) filtered[k] = v;
  j["counts"] = {{"requested", ds.stats.requested}, {"kept", ds.stats.kept}, {"filtered", filtered}};
  j["sequences"] = seqs;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw IntegrityError("no dataset manifest at " + mpath.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(mpath.string() + ": " + e.what());
  }
  Dataset ds;
  std::vector<std::pair<SequenceMeta, std::pair<std::string, int>>> entries;
  try {
    if (j.at("format").get<std::string>() != "pivot-dataset") throw IntegrityError(mpath.string() + ": not a dataset");
    const std::string version = j.at("version").get<std::string>();
    const int major = std::atoi(version.substr(0, version.find('.')).c_str());
    if (major != kDatasetMajorVersion) {
      throw IntegrityError(mpath.string() + ": dataset version " + version + " is not supported (major " +
                           std::to_string(kDatasetMajorVersion) + " expected)");
    }
    if (j.at("columns").get<std::vector<std::string>>() != sequence_columns()) {
      throw IntegrityError(mpath.string() + ": column schema differs");
    }
    for (const auto& p : j.at("plans")) ds.plans.push_back(plan_from_json(p));
    const auto& counts = j.at("counts");
    ds.stats.requested = counts.at("requested").get<int>();
    ds.stats.kept = counts.at("kept").get<int>();
    for (const auto& [k, v] : counts.at("filtered").items()) ds.stats.filtered[k] = v.get<int>();
    for (const auto& s : j.at("sequences")) {
      entries.push_back({meta_from_json(s), {s.at("file").get<std::string>(), s.at("rows").get<int>()}});
    }
  } catch (const json::exception& e) {
    throw ParseError(mpath.string() + ": " + e.what());
  } catch (const RangeError& e) {
    throw ParseError(mpath.string() + ": " + e.what());
  }
  if (static_cast<int>(entries.size()) != ds.stats.kept) {
    throw IntegrityError(mpath.string() + ": counts.kept = " + std::to_string(ds.stats.kept) + " but " +
                         std::to_string(entries.size()) + " sequences listed");
  }
  std::size_t files = 0;
  if (fs::is_directory(dir / "sequences")) {
    for (const auto& e : fs::directory_iterator(dir / "sequences")) files += e.path().extension() == ".csv";
  }
  if (files != entries.size()) {
    throw IntegrityError(dir.string() + ": manifest lists " + std::to_string(entries.size()) +
                         " sequences but " + std::to_string(files) + " files are present");
  }
  for (auto& [meta, fr] : entries) {
    ds.sequences.push_back(read_sequence_file(dir / fr.first, std::move(meta), fr.second));
  }
  return ds;
}

void save_episode_trace(const EpisodeResult& ep, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto cols = sequence_columns();
  cols.insert(cols.end(), {"alpha_est", "omega_est", "phase", "action"});
  std::string text = join(cols) + "\n";
  for (std::size_t i = 0; i < ep.trace.size(); ++i) {
    const TraceRow& r = ep.trace[i];
    append_row(text, ep.frames[i], r.cmd, r.alpha_gt, r.omega_gt);
    text.push_back(',');
    append_double(text, r.alpha_est);
    text.push_back(',');
    append_double(text, r.omega_est);
    text.push_back(',');
    text += to_string(r.phase);
    text.push_back(',');
    text += to_string(r.action);
    text.push_back('\n');
  }
  write_text(path, text);
}

SplitIndices split(const Dataset& ds, const SplitStrategy& strategy) {
  SplitIndices out;
  const int n = static_cast<int>(ds.sequences.size());
  auto random_split = [](std::vector<int> idx, std::uint64_t seed, SplitIndices& s) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(idx.size())));
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
  };
  if (const auto* r = std::get_if<Random80_20>(&strategy)) {
    if (n == 0) throw RangeError("split: empty dataset");
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    random_split(std::move(idx), r->seed, out);
  } else if (const auto* l = std::get_if<LeaveOneObjectOut>(&strategy)) {
    find_object(l->object);
    for (int i = 0; i < n; ++i) {
      (ds.sequences[i].meta.scenario.object == l->object ? out.test : out.train).push_back(i);
    }
    if (out.test.empty()) throw RangeError("split: dataset has no sequences of '" + l->object + "'");
  } else {
    const auto& c = std::get<ClassTransfer>(strategy);
    std::vector<int> train_pool, test_pool;
    for (int i = 0; i < n; ++i) {
      const ObjectClass cls = find_object(ds.sequences[i].meta.scenario.object).cls;
      if (cls == c.train) train_pool.push_back(i);
      if (cls == c.test) test_pool.push_back(i);
    }
    if (train_pool.empty()) throw RangeError("split: no sequences of class " + std::string(to_string(c.train)));
    if (test_pool.empty()) throw RangeError("split: no sequences of class " + std::string(to_string(c.test)));
    if (c.train == c.test) {
      random_split(std::move(train_pool), c.seed, out);
    } else {
      out.train = std::move(train_pool);
      out.test = std::move(test_pool);
    }
  }
  assert_no_leakage(ds, out);
  return out;
}

void assert_no_leakage(const Dataset& ds, const SplitIndices& s) {
  std::set<std::string> train_ids;
  for (int i : s.train) train_ids.insert(ds.sequences.at(static_cast<std::size_t>(i)).meta.id);
  for (int i : s.test) {
    const auto& id = ds.sequences.at(static_cast<std::size_t>(i)).meta.id;
    if (train_ids.count(id)) throw IntegrityError("sequence '" + id + "' is in both train and test");
  }
}

nn::TrainingSample to_sample(const TrajectorySequence& seq) {
  nn::TrainingSample s;
  s.frames.resize(seq.length(), kNumChannels);
  for (int t = 0; t < seq.length(); ++t) {
    for (int c = 0; c < kNumChannels; ++c) s.frames(t, c) = seq.frames[t].channels[c];
  }
  s.alpha = seq.alpha_gt;
  s.omega = seq.omega_gt;
  s.id = seq.meta.id;
  s.object = seq.meta.scenario.object;
  return s;
}

std::vector<nn::TrainingSample> to_samples(const Dataset& ds, std::span<const int> indices) {
  std::vector<nn::TrainingSample> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(to_sample(ds.sequences.at(static_cast<std::size_t>(i))));
  return out;
}

}  // namespace pivot
