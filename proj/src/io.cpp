#include "hopperlab/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hopperlab/errors.hpp"

namespace hopperlab {

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw NumericError("format_number: conversion failed");
  return std::string(buf, ptr);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("missing input: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::string text;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j) text += ',';
    text += table.header[j];
  }
  text += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) text += ',';
      text += format_number(row[j]);
    }
    text += '\n';
  }
  write_text_atomic(path, text);
}

CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
  std::istringstream in(read_text(path));
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw TrialMalformedError(path.string() + ": empty file");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) table.header.push_back(cell);
  if (!expected_header.empty() && table.header != expected_header) throw TrialMalformedError(path.string() + ": unexpected header");

  for (int n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw TrialMalformedError(path.string() + ":" + std::to_string(n) + ": bad number");
      row.push_back(v);
      if (ptr == end) break;
      if (*ptr != ',') throw TrialMalformedError(path.string() + ":" + std::to_string(n) + ": bad separator");
      p = ptr + 1;
    }
    if (row.size() != table.header.size())
      throw TrialMalformedError(path.string() + ":" + std::to_string(n) + ": wrong column count");
    table.rows.push_back(std::move(row));
  }
  return table;
}

const std::vector<std::string>& frame_columns() {
  static const std::vector<std::string> c{"t",           "encoder_theta", "encoder_theta_dot", "imu_body_acc",
                                          "imu_foot_acc", "tof_height",   "motor_current",     "loadcell_force"};
  return c;
}

const std::vector<std::string>& truth_columns() {
  static const std::vector<std::string> c{"t",        "x_b",      "v_b",     "x_f",     "v_f",     "theta",
                                          "theta_dot", "phase",   "z",       "z_dot",   "z_ddot",  "f_static",
                                          "f_drag",   "f_added",  "f_total", "tau",     "foot_acc", "body_acc"};
  return c;
}

const std::vector<std::string>& estimate_columns(bool with_truth) {
  static const std::vector<std::string> base{"t", "x_b_hat", "v_b_hat", "x_f_hat", "v_f_hat", "F_qs", "F_mo"};
  static const std::vector<std::string> full = [] {
    auto c = base;
    for (const char* name : {"x_b", "v_b", "x_f", "v_f", "F_true"}) c.emplace_back(name);
    return c;
  }();
  return with_truth ? full : base;
}

const std::vector<std::string>& intrusion_columns() {
  static const std::vector<std::string> c{"t", "depth", "speed", "force"};
  return c;
}

CsvTable frames_table(const std::vector<SensorFrame>& frames) {
  CsvTable t{frame_columns(), {}};
  t.rows.reserve(frames.size());
  for (const auto& f : frames) {
    t.rows.push_back({f.t, f.encoder_theta, f.encoder_theta_dot, f.imu_body_acc, f.imu_foot_acc, f.tof_height,
                      f.motor_current, f.loadcell_force});
  }
  return t;
}

std::vector<SensorFrame> frames_from_table(const CsvTable& table) {
  std::vector<SensorFrame> out;
  out.reserve(table.rows.size());
  for (const auto& r : table.rows) out.push_back({r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7]});
  return out;
}

CsvTable truth_table(const std::vector<TruthSample>& truth) {
  CsvTable t{truth_columns(), {}};
  t.rows.reserve(truth.size());
  for (const auto& s : truth) {
    const auto& q = s.state;
    t.rows.push_back({q.t, q.x_b, q.v_b, q.x_f, q.v_f, q.theta, q.theta_dot,
                      static_cast<double>(static_cast<int>(q.phase.kind)), s.z, s.z_dot, s.z_ddot,
                      s.force.f_static, s.force.f_drag, s.force.f_added, s.force.f_total, s.tau, s.foot_acc,
                      s.body_acc});
  }
  return t;
}

CsvTable estimates_table(const ForceEstimateSeries& series) {
  const bool with_truth = !series.rows.empty() && series.rows.front().has_truth;
  CsvTable t{estimate_columns(with_truth), {}};
  t.rows.reserve(series.rows.size());
  for (const auto& r : series.rows) {
    std::vector<double> row{r.t, r.x_hat(0), r.x_hat(1), r.x_hat(2), r.x_hat(3), r.F_qs, r.F_mo};
    if (with_truth) row.insert(row.end(), {r.x_b, r.v_b, r.x_f, r.v_f, r.F_true});
    t.rows.push_back(std::move(row));
  }
  return t;
}

ForceEstimateSeries estimates_from_table(const CsvTable& table) {
  ForceEstimateSeries s;
  const bool with_truth = table.header.size() == estimate_columns(true).size();
  for (const auto& r : table.rows) {
    EstimateRow row;
    row.t = r[0];
    row.x_hat << r[1], r[2], r[3], r[4];
    row.F_qs = r[5];
    row.F_mo = r[6];
    if (std::isnan(row.F_qs)) ++s.singular_frames;
    if (with_truth) {
      row.has_truth = true;
      row.x_b = r[7];
      row.v_b = r[8];
      row.x_f = r[9];
      row.v_f = r[10];
      row.F_true = r[11];
    }
    s.rows.push_back(row);
  }
  return s;
}

CsvTable intrusion_table(const IntrusionLog& log) {
  CsvTable t{intrusion_columns(), {}};
  for (const auto& s : log.samples) t.rows.push_back({s.t, s.depth, s.speed, s.force});
  return t;
}

IntrusionLog intrusion_from_table(const CsvTable& table, double speed) {
  IntrusionLog log;
  log.speed = speed;
  for (const auto& r : table.rows) log.samples.push_back({r[0], r[1], r[2], r[3]});
  return log;
}

void attach_truth_table(ForceEstimateSeries& series, const CsvTable& truth, double sensor_period, double dt) {
  const auto decimation = static_cast<std::size_t>(std::lround(sensor_period / dt));
  for (std::size_t k = 0; k < series.rows.size(); ++k) {
    const std::size_t idx = k * decimation;
    if (idx >= truth.rows.size()) break;
    const auto& r = truth.rows[idx];
    auto& row = series.rows[k];
    row.has_truth = true;
    row.x_b = r[1];
    row.v_b = r[2];
    row.x_f = r[3];
    row.v_f = r[4];
    row.F_true = r[14];
  }
}

std::string events_json(const TrialMeta& meta) {
  nlohmann::ordered_json j;
  j["trial_id"] = meta.trial_id;
  j["v_td_nominal"] = meta.v_td_nominal;
  j["k_c"] = meta.k_c;
  j["seed"] = meta.seed;
  j["t_td"] = meta.events.t_td;
  j["t_ce"] = meta.events.t_ce;
  j["t_lo"] = meta.events.t_lo;
  j["v_td"] = meta.events.v_td;
  return j.dump(2) + "\n";
}

TrialMeta events_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TrialMeta m;
    m.trial_id = j.at("trial_id").get<std::string>();
    m.v_td_nominal = j.at("v_td_nominal").get<double>();
    m.k_c = j.at("k_c").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.events.t_td = j.at("t_td").get<double>();
    m.events.t_ce = j.at("t_ce").get<double>();
    m.events.t_lo = j.at("t_lo").get<double>();
    m.events.v_td = j.at("v_td").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw TrialMalformedError(std::string("events json: ") + e.what());
  }
}

}  // namespace hopperlab
