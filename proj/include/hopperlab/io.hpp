#pragma once

// Plain-text trial artifacts. Numbers are written in shortest round-trip form,
// so equal doubles always produce equal bytes.

#include <filesystem>
#include <string>
#include <vector>

#include "hopperlab/estimation.hpp"
#include "hopperlab/identification.hpp"
#include "hopperlab/simulator.hpp"

namespace hopperlab {

std::string format_number(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
// Throws MissingInputError when the file is absent, TrialMalformedError on bad
// content. An empty expected header accepts any header.
CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

// Writes via a temporary file and rename, so readers never see partial output.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

const std::vector<std::string>& frame_columns();
const std::vector<std::string>& truth_columns();
const std::vector<std::string>& estimate_columns(bool with_truth);
const std::vector<std::string>& intrusion_columns();

CsvTable frames_table(const std::vector<SensorFrame>& frames);
std::vector<SensorFrame> frames_from_table(const CsvTable& table);

CsvTable truth_table(const std::vector<TruthSample>& truth);

CsvTable estimates_table(const ForceEstimateSeries& series);
ForceEstimateSeries estimates_from_table(const CsvTable& table);

CsvTable intrusion_table(const IntrusionLog& log);
IntrusionLog intrusion_from_table(const CsvTable& table, double speed);

// Truth columns for estimate rows, read back from a truth CSV.
void attach_truth_table(ForceEstimateSeries& series, const CsvTable& truth, double sensor_period, double dt);

// Trial condition stored alongside the detected events.
struct TrialMeta {
  std::string trial_id;
  double v_td_nominal = 0.0;
  double k_c = 0.0;  // [N/m]
  std::uint64_t seed = 0;
  TrialEvents events;
};

std::string events_json(const TrialMeta& meta);
TrialMeta events_from_json(const std::string& text);

}  // namespace hopperlab
