#pragma once

// Experiment configuration read from an INI-style file:
//
//   [controller]
//   k_compress = 3.75   ; N/cm
//
// Every key is optional and defaults to the library default. Controller
// stiffnesses are written in N/cm and stored in N/m; everything else is SI.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hopperlab/controller.hpp"
#include "hopperlab/estimation.hpp"
#include "hopperlab/identification.hpp"
#include "hopperlab/linkage.hpp"
#include "hopperlab/simulator.hpp"
#include "hopperlab/terrain.hpp"

namespace hopperlab {

struct SweepConfig {
  std::vector<double> touchdown_speeds{0.2, 0.5, 0.8, 1.0, 1.2};  // [m/s]
  std::vector<double> compression_stiffnesses{250.0, 375.0, 500.0};  // [N/m]
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double intrusion_speed_min = 0.022;
  double intrusion_speed_max = 1.1;
  int intrusion_speed_count = 50;
  int intrusion_repeats = 3;
  double intrusion_depth = 0.05;

  std::vector<double> intrusion_speeds() const;
};

struct IdentificationConfig {
  WindowPolicy window = WindowPolicy::kLoading;
  int smoothing_window = 11;
  bool subtract_drag = false;  // needs intrusion logs for the drag fit
};

struct ExperimentConfig {
  LinkageParams linkage;
  TerrainParams terrain;
  ControllerConfig controller;
  SimConfig sim;
  NoiseConfig noise;
  double k_obs = 200.0;
  ObserverDiscretization scheme = ObserverDiscretization::kExact;
  WeightConfig weight;
  IdentificationConfig identification;
  SweepConfig sweep;
  std::filesystem::path output_dir = "hopperlab_out";
  // Unit conversions applied while parsing, for the run manifest.
  std::vector<std::string> unit_notes;

  TrialSetup trial_setup(double touchdown_speed, double k_compress) const;
  EstimationConfig estimation() const;
};

// Parse errors carry the offending line; validation errors name the field.
// Throws ConfigError, or MissingInputError when the file does not exist.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

void validate(const ExperimentConfig& config);

}  // namespace hopperlab
