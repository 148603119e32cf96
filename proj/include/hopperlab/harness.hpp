#pragma once

// Experiment orchestration behind the command-line tool. Every command reads
// and writes plain files under one output directory:
//
//   manifest.json                 sweep plan and per-trial status
//   trials/<id>_frames.csv        sensor frames
//   trials/<id>_truth.csv         integrator-rate truth
//   trials/<id>_events.json       condition, seed and TD/CE/LO
//   trials/<id>_estimates.csv     KF, QS and MO series
//   intrusions/<id>.csv           constant-speed intrusion logs
//   reports/...                   fits, treatment report and plot data

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hopperlab/config.hpp"
#include "hopperlab/identification.hpp"

namespace hopperlab {

enum class Command { kSimulate, kIntrude, kEstimate, kIdentify, kSweep, kReport };

Command parse_command(std::string_view name);
std::string_view to_string(Command command);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitMissingInput = 4;

int exit_code_for(const std::exception& e);

// A stage failure with trial context; keeps the exit code of the cause.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

struct RunOptions {
  std::optional<std::filesystem::path> out;  // beats HOPPERLAB_OUT, which beats the config
  std::optional<std::vector<std::uint64_t>> seeds;
  int jobs = 1;
  bool resume = false;
};

std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const RunOptions& options);

std::string hop_trial_id(double v_td, double k_c, std::uint64_t seed);
std::string intrusion_trial_id(double speed, int repeat);

enum class TrialKind { kHop, kIntrusion };

struct ManifestEntry {
  std::string trial_id;
  TrialKind kind = TrialKind::kHop;
  double speed = 0.0;  // touchdown or intrusion speed [m/s]
  double k_c = 0.0;    // [N/m]; hops only
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;  // relative to the output directory
  bool done = false;
};

struct SweepManifest {
  std::vector<ManifestEntry> entries;
};

SweepManifest plan_sweep(const ExperimentConfig& config, bool hops, bool intrusions);
std::string manifest_json(const SweepManifest& manifest);
SweepManifest manifest_from_json(const std::string& text);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. If any call throws, the
// failure with the lowest index is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn);

struct IdentificationOutcome {
  TreatmentReport report;
  std::optional<DepthSpeedFit> depth_speed;
  std::vector<TrialSamples> trials;
  std::vector<std::string> trial_ids;
};

// Reads trial estimates (and intrusion logs when present) from `out`.
IdentificationOutcome identify_from_disk(const ExperimentConfig& config, const std::filesystem::path& out);

std::string treatment_report_json(const TreatmentReport& report, const std::optional<DepthSpeedFit>& fit);
std::string treatment_estimates_csv(const TreatmentReport& report);

// Executes one command; throws on failure.
void run_command(const ExperimentConfig& config, Command command, const RunOptions& options);

}  // namespace hopperlab

#include "hopperlab/detail/parallel.hpp"
