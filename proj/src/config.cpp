#include "hopperlab/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "hopperlab/errors.hpp"

namespace hopperlab {

namespace pt = boost::property_tree;

std::vector<double> SweepConfig::intrusion_speeds() const {
  std::vector<double> out;
  if (intrusion_speed_count == 1) return {intrusion_speed_min};
  for (int i = 0; i < intrusion_speed_count; ++i) {
    out.push_back(intrusion_speed_min +
                  (intrusion_speed_max - intrusion_speed_min) * i / (intrusion_speed_count - 1));
  }
  return out;
}

TrialSetup ExperimentConfig::trial_setup(double touchdown_speed, double k_compress) const {
  TrialSetup s;
  s.sim = sim;
  s.sim.touchdown_speed = touchdown_speed;
  s.controller = controller;
  s.controller.k_compress = k_compress;
  s.terrain = terrain;
  s.linkage = linkage;
  s.noise = noise;
  return s;
}

EstimationConfig ExperimentConfig::estimation() const {
  EstimationConfig e = default_estimation_config(noise, linkage, sim.sensor_period);
  e.k_obs = k_obs;
  e.scheme = scheme;
  return e;
}

namespace {

constexpr double kNewtonPerCm = 100.0;  // N/m per N/cm

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Line of each "section.key" in the source text, for error messages.
std::map<std::string, int> key_lines(const std::string& text) {
  std::map<std::string, int> lines;
  std::istringstream in(text);
  std::string line, section;
  for (int n = 1; std::getline(in, line); ++n) {
    const std::string s = trim(line);
    if (s.empty() || s[0] == ';' || s[0] == '#') continue;
    if (s.front() == '[') {
      section = trim(s.substr(1, s.find(']') - 1));
      lines.emplace(section, n);
    } else if (auto eq = s.find('='); eq != std::string::npos) {
      lines.emplace(section + "." + trim(s.substr(0, eq)), n);
    }
  }
  return lines;
}

class Reader {
 public:
  explicit Reader(std::map<std::string, int> lines) : lines_(std::move(lines)) {}

  [[noreturn]] void fail(const std::string& where, const std::string& msg) const {
    const auto it = lines_.find(where);
    const std::string at = it == lines_.end() ? "" : " (line " + std::to_string(it->second) + ")";
    throw ConfigError("config: " + where + at + ": " + msg);
  }

  double number(const std::string& where, const std::string& raw) const {
    double v = 0.0;
    const char* end = raw.data() + raw.size();
    const auto [ptr, ec] = std::from_chars(raw.data(), end, v);
    if (ec != std::errc() || ptr != end) fail(where, "expected a number, got '" + raw + "'");
    return v;
  }

  int integer(const std::string& where, const std::string& raw) const {
    int v = 0;
    const char* end = raw.data() + raw.size();
    const auto [ptr, ec] = std::from_chars(raw.data(), end, v);
    if (ec != std::errc() || ptr != end) fail(where, "expected an integer, got '" + raw + "'");
    return v;
  }

  bool boolean(const std::string& where, const std::string& raw) const {
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    fail(where, "expected true or false, got '" + raw + "'");
  }

  std::vector<std::string> items(const std::string& where, const std::string& raw) const {
    std::vector<std::string> out;
    std::stringstream ss(raw);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(trim(item));
    if (out.empty() || std::any_of(out.begin(), out.end(), [](const auto& s) { return s.empty(); }))
      fail(where, "expected a nonempty comma-separated list");
    return out;
  }

  std::vector<double> numbers(const std::string& where, const std::string& raw) const {
    std::vector<double> out;
    for (const auto& s : items(where, raw)) out.push_back(number(where, s));
    return out;
  }

 private:
  std::map<std::string, int> lines_;
};

using Setter = std::function<void(const std::string& where, const std::string& raw)>;
using Section = std::map<std::string, Setter>;

std::map<std::string, Section> schema(ExperimentConfig& c, const Reader& r) {
  auto num = [&r](double& field) {
    return [&r, &field](const std::string& w, const std::string& v) { field = r.number(w, v); };
  };
  auto per_cm = [&r, &c](double& field) {
    return [&r, &c, &field](const std::string& w, const std::string& v) {
      field = r.number(w, v) * kNewtonPerCm;
      c.unit_notes.push_back(w + ": " + v + " N/cm -> " + std::to_string(field) + " N/m");
    };
  };

  std::map<std::string, Section> s;
  auto& L = c.linkage;
  s["linkage"] = {{"l_upper", num(L.l_upper)},         {"l_lower", num(L.l_lower)},
                  {"theta_min", num(L.theta_min)},     {"theta_max", num(L.theta_max)},
                  {"rotor_inertia", num(L.rotor_inertia)}, {"torque_constant", num(L.torque_constant)},
                  {"m_body", num(L.m_body)},           {"m_foot", num(L.m_foot)},
                  {"mount_offset", num(L.mount_offset)}};
  auto& T = c.terrain;
  s["terrain"] = {{"k_stiff", num(T.k_stiff)},
                  {"m_a_inf", num(T.m_a_inf)},
                  {"z_c", num(T.z_c)},
                  {"d_grain", num(T.d_grain)},
                  {"surface_height", num(T.surface_height)},
                  {"unload_stiffness_ratio", num(T.unload_stiffness_ratio)}};
  auto& C = c.controller;
  s["controller"] = {
      {"k_compress", per_cm(C.k_compress)},
      {"k_extend", per_cm(C.k_extend)},
      {"L0_compress", num(C.L0_compress)},
      {"L0_extend", num(C.L0_extend)},
      {"b_stance", num(C.b_stance)},
      {"b_flight", num(C.b_flight)},
      {"contact_force_threshold", num(C.contact_force_threshold)},
      {"min_compression", num(C.min_compression)},
      {"touchdown",
       [&r, &C](const std::string& w, const std::string& v) {
         if (v == "geometric") C.touchdown = ContactDetector::kGeometric;
         else if (v == "force") C.touchdown = ContactDetector::kForceThreshold;
         else r.fail(w, "expected geometric or force");
       }},
      {"liftoff",
       [&r, &C](const std::string& w, const std::string& v) {
         if (v == "force") C.liftoff = LiftoffRule::kForceThreshold;
         else if (v == "neutral") C.liftoff = LiftoffRule::kLegAtNeutral;
         else r.fail(w, "expected force or neutral");
       }},
  };
  auto& S = c.sim;
  s["sim"] = {{"dt", num(S.dt)},
              {"sensor_period", num(S.sensor_period)},
              {"touchdown_speed", num(S.touchdown_speed)},
              {"release_height", num(S.release_height)},
              {"t_max", num(S.t_max)},
              {"post_liftoff", num(S.post_liftoff)}};
  auto& N = c.noise;
  s["noise"] = {{"encoder_resolution", num(N.encoder_resolution)},
                {"encoder_sigma", num(N.encoder_sigma)},
                {"encoder_rate_window",
                 [&r, &N](const std::string& w, const std::string& v) { N.encoder_rate_window = r.integer(w, v); }},
                {"imu_sigma", num(N.imu_sigma)},
                {"imu_bias_max", num(N.imu_bias_max)},
                {"tof_sigma", num(N.tof_sigma)},
                {"current_sigma", num(N.current_sigma)},
                {"loadcell_sigma", num(N.loadcell_sigma)}};
  s["estimation"] = {{"k_obs", num(c.k_obs)},
                     {"scheme", [&r, &c](const std::string& w, const std::string& v) {
                        if (v == "exact") c.scheme = ObserverDiscretization::kExact;
                        else if (v == "euler") c.scheme = ObserverDiscretization::kEuler;
                        else r.fail(w, "expected exact or euler");
                      }}};
  auto& W = c.weight;
  s["weight"] = {{"sigma_good", num(W.sigma_good)},
                 {"sigma_bad", num(W.sigma_bad)},
                 {"k_w", num(W.k_w)},
                 {"a0", num(W.a0)}};
  auto& I = c.identification;
  s["identification"] = {
      {"window",
       [&r, &I](const std::string& w, const std::string& v) {
         if (v == "loading") I.window = WindowPolicy::kLoading;
         else if (v == "stance") I.window = WindowPolicy::kStance;
         else if (v == "virgin") I.window = WindowPolicy::kVirgin;
         else r.fail(w, "expected loading, stance or virgin");
       }},
      {"smoothing_window",
       [&r, &I](const std::string& w, const std::string& v) { I.smoothing_window = r.integer(w, v); }},
      {"subtract_drag",
       [&r, &I](const std::string& w, const std::string& v) { I.subtract_drag = r.boolean(w, v); }}};
  auto& G = c.sweep;
  s["sweep"] = {
      {"touchdown_speeds",
       [&r, &G](const std::string& w, const std::string& v) { G.touchdown_speeds = r.numbers(w, v); }},
      {"compression_stiffnesses",
       [&r, &G, &c](const std::string& w, const std::string& v) {
         G.compression_stiffnesses = r.numbers(w, v);
         for (auto& k : G.compression_stiffnesses) k *= kNewtonPerCm;
         c.unit_notes.push_back(w + ": " + v + " N/cm -> N/m x100");
       }},
      {"seeds",
       [&r, &G](const std::string& w, const std::string& v) {
         G.seeds.clear();
         for (const auto& item : r.items(w, v)) {
           std::uint64_t seed = 0;
           const char* end = item.data() + item.size();
           const auto [ptr, ec] = std::from_chars(item.data(), end, seed);
           if (ec != std::errc() || ptr != end) r.fail(w, "expected unsigned integers");
           G.seeds.push_back(seed);
         }
       }},
      {"intrusion_speed_min", num(G.intrusion_speed_min)},
      {"intrusion_speed_max", num(G.intrusion_speed_max)},
      {"intrusion_speed_count",
       [&r, &G](const std::string& w, const std::string& v) { G.intrusion_speed_count = r.integer(w, v); }},
      {"intrusion_repeats",
       [&r, &G](const std::string& w, const std::string& v) { G.intrusion_repeats = r.integer(w, v); }},
      {"intrusion_depth", num(G.intrusion_depth)}};
  s["output"] = {{"dir", [&c](const std::string&, const std::string& v) { c.output_dir = v; }}};
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentConfig c;
  const Reader reader(key_lines(text));
  const auto sections = schema(c, reader);
  for (const auto& [name, body] : tree) {
    const auto sec = sections.find(name);
    if (sec == sections.end()) {
      if (body.empty() && !body.data().empty()) reader.fail(name, "keys must live inside a [section]");
      reader.fail(name, "unknown section '" + name + "'");
    }
    for (const auto& [key, node] : body) {
      const std::string where = name + "." + key;
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end()) reader.fail(where, "unknown key '" + key + "'");
      std::string value = node.data();
      // Inline comments.
      if (auto pos = value.find_first_of(";#"); pos != std::string::npos) value.erase(pos);
      value = trim(value);
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      setter->second(where, value);
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const ExperimentConfig& c) {
  auto field = [](const std::string& name, auto&& check) {
    try {
      check();
    } catch (const std::exception& e) {
      throw ConfigError("config: [" + name + "] " + e.what());
    }
  };
  field("linkage", [&] { validate(c.linkage); });
  field("terrain", [&] { validate(c.terrain); });
  field("controller", [&] { validate(c.controller, c.linkage); });
  field("weight", [&] { validate(c.weight); });

  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  require(c.sim.dt > 0.0, "sim.dt must be positive");
  require(c.sim.sensor_period >= c.sim.dt, "sim.sensor_period must be at least sim.dt");
  const double ratio = c.sim.sensor_period / c.sim.dt;
  require(std::abs(ratio - std::round(ratio)) < 1e-9, "sim.sensor_period must be a multiple of sim.dt");
  require(c.sim.touchdown_speed >= 0.0, "sim.touchdown_speed must be nonnegative");
  require(c.sim.t_max > 0.0, "sim.t_max must be positive");
  require(c.sim.post_liftoff >= 0.0, "sim.post_liftoff must be nonnegative");
  require(c.noise.encoder_rate_window >= 1, "noise.encoder_rate_window must be >= 1");
  for (double s : {c.noise.encoder_resolution, c.noise.encoder_sigma, c.noise.imu_sigma, c.noise.imu_bias_max,
                   c.noise.tof_sigma, c.noise.current_sigma, c.noise.loadcell_sigma})
    require(s >= 0.0, "noise values must be nonnegative");
  require(c.k_obs > 0.0 && c.k_obs * c.sim.sensor_period < 1.0,
          "estimation.k_obs must be positive with k_obs * sensor_period < 1");
  require(c.identification.smoothing_window >= 3, "identification.smoothing_window must be >= 3");

  const auto& g = c.sweep;
  require(!g.touchdown_speeds.empty(), "sweep.touchdown_speeds must be nonempty");
  require(!g.compression_stiffnesses.empty(), "sweep.compression_stiffnesses must be nonempty");
  require(!g.seeds.empty(), "sweep.seeds must be nonempty");
  require(std::set<std::uint64_t>(g.seeds.begin(), g.seeds.end()).size() == g.seeds.size(),
          "sweep.seeds must be distinct");
  for (double v : g.touchdown_speeds) require(v >= 0.0, "sweep.touchdown_speeds must be nonnegative");
  for (double k : g.compression_stiffnesses) {
    ControllerConfig cc = c.controller;
    cc.k_compress = k;
    field("sweep.compression_stiffnesses", [&] { validate(cc, c.linkage); });
  }
  require(g.intrusion_speed_count >= 1, "sweep.intrusion_speed_count must be >= 1");
  require(g.intrusion_speed_min > 0.0 && g.intrusion_speed_max >= g.intrusion_speed_min,
          "sweep intrusion speeds must satisfy 0 < min <= max");
  require(g.intrusion_repeats >= 1, "sweep.intrusion_repeats must be >= 1");
  require(g.intrusion_depth > 0.0, "sweep.intrusion_depth must be positive");
  require(!c.output_dir.empty(), "output.dir must be nonempty");
}

}  // namespace hopperlab
