#include "hopperlab/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>

#include "hopperlab/errors.hpp"
#include "hopperlab/io.hpp"

namespace hopperlab {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

Command parse_command(std::string_view name) {
  static const std::map<std::string_view, Command> names{
      {"simulate", Command::kSimulate}, {"intrude", Command::kIntrude}, {"estimate", Command::kEstimate},
      {"identify", Command::kIdentify}, {"sweep", Command::kSweep},     {"report", Command::kReport}};
  const auto it = names.find(name);
  if (it == names.end()) throw ConfigError("unknown command '" + std::string(name) + "'");
  return it->second;
}

std::string_view to_string(Command c) {
  switch (c) {
    case Command::kSimulate: return "simulate";
    case Command::kIntrude: return "intrude";
    case Command::kEstimate: return "estimate";
    case Command::kIdentify: return "identify";
    case Command::kSweep: return "sweep";
    case Command::kReport: return "report";
  }
  return "?";
}

int exit_code_for(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->exit_code();
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const MissingInputError*>(&e)) return kExitMissingInput;
  return kExitRuntime;
}

fs::path resolve_output_dir(const ExperimentConfig& config, const RunOptions& options) {
  if (options.out) return *options.out;
  if (const char* env = std::getenv("HOPPERLAB_OUT"); env && *env) return env;
  return config.output_dir;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// Runs `body`, re-raising any failure with the trial id prepended.
template <typename Body>
void with_context(const std::string& trial_id, Body&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    throw StageError(trial_id + ": " + e.what(), exit_code_for(e));
  }
}

fs::path trial_path(const fs::path& out, const std::string& id, const char* suffix) {
  return out / "trials" / (id + suffix);
}

}  // namespace

std::string hop_trial_id(double v_td, double k_c, std::uint64_t seed) {
  return "hop_v" + fixed(v_td, 2) + "_kc" + fixed(k_c / 100.0, 2) + "_s" + std::to_string(seed);
}

std::string intrusion_trial_id(double speed, int repeat) {
  return "intrude_v" + fixed(speed, 3) + "_r" + std::to_string(repeat);
}

SweepManifest plan_sweep(const ExperimentConfig& config, bool hops, bool intrusions) {
  SweepManifest m;
  const auto& g = config.sweep;
  if (hops) {
    for (double v : g.touchdown_speeds) {
      for (double k : g.compression_stiffnesses) {
        for (auto seed : g.seeds) {
          ManifestEntry e;
          e.trial_id = hop_trial_id(v, k, seed);
          e.kind = TrialKind::kHop;
          e.speed = v;
          e.k_c = k;
          e.seed = seed;
          for (const char* suffix : {"_frames.csv", "_truth.csv", "_events.json", "_estimates.csv"})
            e.outputs.push_back("trials/" + e.trial_id + suffix);
          m.entries.push_back(std::move(e));
        }
      }
    }
  }
  if (intrusions) {
    const auto speeds = g.intrusion_speeds();
    for (std::size_t i = 0; i < speeds.size(); ++i) {
      for (int r = 1; r <= g.intrusion_repeats; ++r) {
        ManifestEntry e;
        e.trial_id = intrusion_trial_id(speeds[i], r);
        e.kind = TrialKind::kIntrusion;
        e.speed = speeds[i];
        e.seed = static_cast<std::uint64_t>(r) * 1000 + i;
        e.outputs.push_back("intrusions/" + e.trial_id + ".csv");
        m.entries.push_back(std::move(e));
      }
    }
  }
  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.trial_id).second) throw ConfigError("sweep grid produces duplicate trial id " + e.trial_id);
  }
  return m;
}

std::string manifest_json(const SweepManifest& manifest) {
  ordered_json trials = ordered_json::array();
  for (const auto& e : manifest.entries) {
    ordered_json j;
    j["trial_id"] = e.trial_id;
    j["kind"] = e.kind == TrialKind::kHop ? "hop" : "intrusion";
    j["speed"] = e.speed;
    j["k_c"] = e.k_c;
    j["seed"] = e.seed;
    j["outputs"] = e.outputs;
    j["status"] = e.done ? "done" : "pending";
    trials.push_back(std::move(j));
  }
  ordered_json root;
  root["trials"] = std::move(trials);
  return root.dump(2) + "\n";
}

SweepManifest manifest_from_json(const std::string& text) {
  try {
    const auto root = nlohmann::json::parse(text);
    SweepManifest m;
    for (const auto& j : root.at("trials")) {
      ManifestEntry e;
      e.trial_id = j.at("trial_id").get<std::string>();
      e.kind = j.at("kind").get<std::string>() == "hop" ? TrialKind::kHop : TrialKind::kIntrusion;
      e.speed = j.at("speed").get<double>();
      e.k_c = j.at("k_c").get<double>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.outputs = j.at("outputs").get<std::vector<std::string>>();
      e.done = j.at("status").get<std::string>() == "done";
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw TrialMalformedError(std::string("manifest: ") + e.what());
  }
}

namespace {

void write_estimates(const ExperimentConfig& config, const fs::path& out, const std::string& id,
                     const std::vector<SensorFrame>& frames, const TrialLog* log) {
  auto series = run_estimation(frames, config.linkage, config.estimation());
  if (log) {
    attach_truth(series, *log);
  } else if (fs::exists(trial_path(out, id, "_truth.csv"))) {
    const auto truth = read_csv(trial_path(out, id, "_truth.csv"), truth_columns());
    attach_truth_table(series, truth, config.sim.sensor_period, config.sim.dt);
  }
  write_csv(trial_path(out, id, "_estimates.csv"), estimates_table(series));
}

void run_hop(const ExperimentConfig& config, const fs::path& out, const ManifestEntry& e, bool estimate) {
  const TrialLog log = run_hop_trial(config.trial_setup(e.speed, e.k_c), e.seed);
  write_csv(trial_path(out, e.trial_id, "_frames.csv"), frames_table(log.frames));
  write_csv(trial_path(out, e.trial_id, "_truth.csv"), truth_table(log.truth));
  write_text_atomic(trial_path(out, e.trial_id, "_events.json"),
                    events_json({e.trial_id, e.speed, e.k_c, e.seed, log.events}));
  if (estimate) write_estimates(config, out, e.trial_id, log.frames, &log);
}

void run_intrusion(const ExperimentConfig& config, const fs::path& out, const ManifestEntry& e) {
  const auto log = run_constant_speed_intrusion(e.speed, config.sweep.intrusion_depth, config.terrain,
                                                config.noise.loadcell_sigma, e.seed, config.sim.sensor_period);
  write_csv(out / "intrusions" / (e.trial_id + ".csv"), intrusion_table(log));
}

bool outputs_exist(const fs::path& out, const ManifestEntry& e) {
  return std::all_of(e.outputs.begin(), e.outputs.end(), [&](const auto& p) { return fs::exists(out / p); });
}

// Writes the plan first, then runs pending entries and records completions.
void execute_manifest(const ExperimentConfig& config, const fs::path& out, SweepManifest plan, const RunOptions& options) {
  const fs::path manifest_path = out / "manifest.json";
  if (options.resume && fs::exists(manifest_path)) {
    const auto previous = manifest_from_json(read_text(manifest_path));
    std::set<std::string> done;
    for (const auto& e : previous.entries) {
      if (e.done) done.insert(e.trial_id);
    }
    for (auto& e : plan.entries) e.done = done.count(e.trial_id) && outputs_exist(out, e);
  }
  write_text_atomic(manifest_path, manifest_json(plan));

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    if (!plan.entries[i].done) pending.push_back(i);
  }
  std::mutex mu;
  parallel_for(pending.size(), options.jobs, [&](std::size_t j) {
    auto& e = plan.entries[pending[j]];
    with_context(e.trial_id, [&] {
      if (e.kind == TrialKind::kHop) run_hop(config, out, e, true);
      else run_intrusion(config, out, e);
    });
    std::lock_guard lock(mu);
    e.done = true;
    write_text_atomic(manifest_path, manifest_json(plan));
  });
}

std::vector<std::string> trial_ids_with(const fs::path& dir, const std::string& suffix) {
  std::vector<std::string> ids;
  if (!fs::is_directory(dir)) return ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<IntrusionLog> read_intrusions(const fs::path& out) {
  std::vector<IntrusionLog> logs;
  for (const auto& id : trial_ids_with(out / "intrusions", ".csv")) {
    const auto table = read_csv(out / "intrusions" / (id + ".csv"), intrusion_columns());
    const double speed = table.rows.empty() ? 0.0 : table.rows.front()[2];
    logs.push_back(intrusion_from_table(table, speed));
  }
  return logs;
}

ordered_json fit_json(const DepthSpeedFit& f) {
  ordered_json j;
  j["k_fit"] = f.k_fit;
  j["m_a_inf_fit"] = f.m_a_inf_fit;
  j["z_c_fit"] = f.z_c_fit;
  j["rmse"] = f.rmse;
  j["max_abs_residual"] = f.max_abs_residual;
  j["n_samples"] = f.n_samples;
  return j;
}

}  // namespace

IdentificationOutcome identify_from_disk(const ExperimentConfig& config, const fs::path& out) {
  IdentificationOutcome result;
  const auto intrusions = read_intrusions(out);
  if (!intrusions.empty()) result.depth_speed = fit_depth_speed_model(intrusions);
  if (config.identification.subtract_drag && !result.depth_speed)
    throw MissingInputError("identify: subtract_drag needs intrusion logs under " + (out / "intrusions").string());

  const auto ids = trial_ids_with(out / "trials", "_events.json");
  if (ids.empty()) throw MissingInputError("identify: no trials under " + (out / "trials").string());
  for (const auto& id : ids) {
    with_context(id, [&] {
      const auto meta = events_from_json(read_text(trial_path(out, id, "_events.json")));
      const auto table = read_csv(trial_path(out, id, "_estimates.csv"), {});
      if (table.header != estimate_columns(false) && table.header != estimate_columns(true))
        throw TrialMalformedError("unexpected estimates header");
      const auto series = estimates_from_table(table);
      const auto& ic = config.identification;
      TrialSamples t;
      t.v_td = meta.v_td_nominal;
      t.k_c = meta.k_c;
      t.seed = meta.seed;
      t.qs = extract_samples(series, {}, meta.events, ForceSource::kQS, ic.window, config.terrain, ic.smoothing_window);
      t.mo = extract_samples(series, {}, meta.events, ForceSource::kMO, ic.window, config.terrain, ic.smoothing_window);
      result.trials.push_back(std::move(t));
      result.trial_ids.push_back(id);
    });
  }
  const DepthSpeedFit* drag = config.identification.subtract_drag ? &*result.depth_speed : nullptr;
  result.report = treatment_comparison(result.trials, config.terrain.k_stiff, config.weight, drag);
  return result;
}

std::string treatment_report_json(const TreatmentReport& report, const std::optional<DepthSpeedFit>& fit) {
  ordered_json root;
  root["k_gt"] = report.k_gt;
  ordered_json conditions = ordered_json::array();
  for (const auto& s : report.summaries) {
    ordered_json j;
    j["v_td"] = s.v_td;
    j["k_c"] = s.k_c;
    j["k_c_label"] = fixed(s.k_c / 100.0, 2) + " N/cm";
    j["treatment"] = std::string(to_string(s.treatment));
    j["mean_k"] = s.mean_k;
    j["sem_k"] = s.sem_k;
    j["rel_err"] = s.rel_err;
    j["n"] = s.n;
    conditions.push_back(std::move(j));
  }
  root["conditions"] = std::move(conditions);
  if (fit) root["depth_speed_fit"] = fit_json(*fit);
  return root.dump(2) + "\n";
}

std::string treatment_estimates_csv(const TreatmentReport& report) {
  std::string text = "v_td,k_c,treatment,k_est,seed\n";
  for (const auto& e : report.estimates) {
    text += format_number(e.v_td) + "," + format_number(e.k_c) + "," + std::string(to_string(e.treatment)) + "," +
            format_number(e.k_est) + "," + std::to_string(e.seed) + "\n";
  }
  return text;
}

namespace {

void write_identification(const IdentificationOutcome& id, const fs::path& out) {
  write_text_atomic(out / "reports" / "treatment_report.json", treatment_report_json(id.report, id.depth_speed));
  write_text_atomic(out / "reports" / "treatment_estimates.csv", treatment_estimates_csv(id.report));
}

// Summary rows for one slice of the condition grid.
std::string slice_csv(const TreatmentReport& report, bool by_speed, double fixed_value) {
  std::string text = std::string(by_speed ? "v_td" : "k_c") + ",treatment,mean_k,sem_k,rel_err,n\n";
  for (const auto& s : report.summaries) {
    if ((by_speed ? s.k_c : s.v_td) != fixed_value) continue;
    text += format_number(by_speed ? s.v_td : s.k_c) + "," + std::string(to_string(s.treatment)) + "," +
            format_number(s.mean_k) + "," + format_number(s.sem_k) + "," + format_number(s.rel_err) + "," +
            std::to_string(s.n) + "\n";
  }
  return text;
}

double nearest(const std::vector<double>& values, double target) {
  return *std::min_element(values.begin(), values.end(),
                           [&](double a, double b) { return std::abs(a - target) < std::abs(b - target); });
}

void write_report(const ExperimentConfig& config, const fs::path& out) {
  const auto id = identify_from_disk(config, out);
  write_identification(id, out);
  const fs::path dir = out / "reports";

  std::vector<double> speeds, stiffnesses;
  for (const auto& s : id.report.summaries) {
    speeds.push_back(s.v_td);
    stiffnesses.push_back(s.k_c);
  }
  const double k_slice = nearest(stiffnesses, 375.0);
  const double v_slice = nearest(speeds, 1.0);
  write_text_atomic(dir / "fig5c_speed_slice.csv", slice_csv(id.report, true, k_slice));
  write_text_atomic(dir / "fig5d_stiffness_slice.csv", slice_csv(id.report, false, v_slice));

  ordered_json summary;
  summary["n_trials"] = id.trials.size();
  summary["speed_slice_k_c"] = k_slice;
  summary["stiffness_slice_v_td"] = v_slice;
  summary["treatments"] = nlohmann::ordered_json::parse(treatment_report_json(id.report, id.depth_speed));
  summary["unit_notes"] = config.unit_notes;

  if (id.depth_speed) {
    const auto& fit = *id.depth_speed;
    const auto intrusions = read_intrusions(out);
    // Force-depth at the slowest rig speed with the fitted surface.
    const auto slow = std::min_element(intrusions.begin(), intrusions.end(),
                                       [](const auto& a, const auto& b) { return a.speed < b.speed; });
    CsvTable fd{{"depth", "force", "fit_force"}, {}};
    for (const auto& s : slow->samples) {
      fd.rows.push_back({s.depth, s.force, fit.k_fit * s.depth + fit.added_mass_gradient(s.depth) * s.speed * s.speed});
    }
    write_csv(dir / "fig4a_force_depth.csv", fd);

    TerrainParams fitted = config.terrain;
    fitted.k_stiff = fit.k_fit;
    fitted.m_a_inf = fit.m_a_inf_fit;
    fitted.z_c = fit.z_c_fit;
    std::vector<double> depths, rates;
    for (int i = 0; i <= 25; ++i) depths.push_back(config.sweep.intrusion_depth * i / 25);
    rates = config.sweep.intrusion_speeds();
    const auto map = force_map(fitted, std::span<const double>(depths), std::span<const double>(rates));
    CsvTable surface{{"depth", "speed", "force"}, {}};
    for (std::size_t i = 0; i < depths.size(); ++i) {
      for (std::size_t j = 0; j < rates.size(); ++j) {
        surface.rows.push_back({depths[i], rates[j], map(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
      }
    }
    write_csv(dir / "fig4c_force_surface.csv", surface);

    // Added-mass residual for the fastest trial at the speed-slice stiffness.
    std::size_t pick = 0;
    for (std::size_t i = 0; i < id.trials.size(); ++i) {
      const auto& t = id.trials[i];
      const auto& p = id.trials[pick];
      if (t.k_c == k_slice && (p.k_c != k_slice || t.v_td > p.v_td)) pick = i;
    }
    // Load-cell force on fresh-material samples, where the intrusion law holds term by term.
    const auto& pick_id = id.trial_ids[pick];
    const auto meta = events_from_json(read_text(trial_path(out, pick_id, "_events.json")));
    const auto series = estimates_from_table(read_csv(trial_path(out, pick_id, "_estimates.csv"), {}));
    const auto frames = frames_from_table(read_csv(trial_path(out, pick_id, "_frames.csv"), frame_columns()));
    const auto samples = extract_samples(series, frames, meta.events, ForceSource::kLoadcell, WindowPolicy::kVirgin,
                                         config.terrain, config.identification.smoothing_window);
    const auto am = added_mass_reconstruction(fit, samples);
    CsvTable amt{{"t", "residual", "predicted"}, {}};
    for (std::size_t i = 0; i < am.t.size(); ++i) amt.rows.push_back({am.t[i], am.residual[i], am.predicted[i]});
    write_csv(dir / "fig4f_added_mass.csv", amt);
    summary["added_mass_trial"] = pick_id;
    if (am.t.size() >= 2) {
      try {
        summary["added_mass_correlation"] = pearson_correlation(am.residual, am.predicted);
      } catch (const DegenerateFitError&) {
        summary["added_mass_correlation"] = nullptr;
      }
    }
  }
  write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace

void run_command(const ExperimentConfig& config, Command command, const RunOptions& options) {
  ExperimentConfig cfg = config;
  if (options.seeds) {
    cfg.sweep.seeds = *options.seeds;
    validate(cfg);
  }
  const fs::path out = resolve_output_dir(cfg, options);
  fs::create_directories(out);

  switch (command) {
    case Command::kSimulate: {
      ManifestEntry e;
      e.speed = cfg.sim.touchdown_speed;
      e.k_c = cfg.controller.k_compress;
      e.seed = cfg.sweep.seeds.front();
      e.trial_id = hop_trial_id(e.speed, e.k_c, e.seed);
      with_context(e.trial_id, [&] { run_hop(cfg, out, e, false); });
      break;
    }
    case Command::kIntrude:
      execute_manifest(cfg, out, plan_sweep(cfg, false, true), options);
      break;
    case Command::kEstimate: {
      const auto ids = trial_ids_with(out / "trials", "_frames.csv");
      if (ids.empty()) throw MissingInputError("estimate: no frame logs under " + (out / "trials").string());
      parallel_for(ids.size(), options.jobs, [&](std::size_t i) {
        with_context(ids[i], [&] {
          const auto frames = frames_from_table(read_csv(trial_path(out, ids[i], "_frames.csv"), frame_columns()));
          write_estimates(cfg, out, ids[i], frames, nullptr);
        });
      });
      break;
    }
    case Command::kIdentify:
      write_identification(identify_from_disk(cfg, out), out);
      break;
    case Command::kSweep:
      execute_manifest(cfg, out, plan_sweep(cfg, true, true), options);
      write_report(cfg, out);
      break;
    case Command::kReport:
      write_report(cfg, out);
      break;
  }
}

}  // namespace hopperlab
