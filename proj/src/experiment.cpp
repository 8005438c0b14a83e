#include "chainbell/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "chainbell/error.hpp"
#include "chainbell/svg_plot.hpp"

#ifndef CHAINBELL_VERSION
#define CHAINBELL_VERSION "0.0.0"
#endif

namespace chainbell {

namespace fs = std::filesystem;
using nlohmann::json;

const char* tool_version() { return CHAINBELL_VERSION; }

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Bound: return "bound";
    case ExperimentKind::Tightness: return "tightness";
    case ExperimentKind::Gram: return "gram";
    case ExperimentKind::Witness: return "witness";
    case ExperimentKind::Fig1: return "fig1";
    case ExperimentKind::Fig2: return "fig2";
    case ExperimentKind::Fig3: return "fig3";
  }
  return "?";
}

ExperimentKind parse_experiment(const std::string& name) {
  static const std::map<std::string, ExperimentKind> names = {
      {"bound", ExperimentKind::Bound},     {"tightness", ExperimentKind::Tightness},
      {"gram", ExperimentKind::Gram},       {"witness", ExperimentKind::Witness},
      {"fig1", ExperimentKind::Fig1},       {"fig1_xstate", ExperimentKind::Fig1},
      {"fig2", ExperimentKind::Fig2},       {"fig2_randomness", ExperimentKind::Fig2},
      {"fig3", ExperimentKind::Fig3},       {"fig3_compare", ExperimentKind::Fig3}};
  auto it = names.find(name);
  if (it == names.end()) throw Error(ErrorCode::InvalidConfig, "unknown experiment '" + name + "'");
  return it->second;
}

std::vector<double> linspace(double start, double stop, int count) {
  if (count < 1) throw Error(ErrorCode::InvalidConfig, "grid needs at least one point");
  if (count == 1) return {start};
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = start + (stop - start) * i / (count - 1);
  out.back() = stop;
  return out;
}

namespace {

constexpr double kGammaMax = std::numbers::pi / 12.0;

std::vector<double> default_nu_grid() {
  // 25 interior points of (0.4, 1).
  std::vector<double> g;
  for (int k = 1; k <= 25; ++k) g.push_back(0.4 + 0.6 * k / 26.0);
  return g;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, what);
}

void check_grid(const std::vector<double>& g, const char* name, double lo, double hi, bool open) {
  require(!g.empty(), std::string(name) + " is empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    require(std::isfinite(g[i]), std::string(name) + " has a non-finite entry");
    const bool inside = open ? (g[i] > lo && g[i] < hi) : (g[i] >= lo && g[i] <= hi);
    require(inside, std::string(name) + " entry " + std::to_string(g[i]) + " outside " + (open ? "(" : "[") +
                        std::to_string(lo) + ", " + std::to_string(hi) + (open ? ")" : "]"));
    if (i > 0) require(g[i] > g[i - 1], std::string(name) + " must be strictly increasing");
  }
}

}  // namespace

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  return resolve(cfg);
}

ExperimentConfig resolve(ExperimentConfig cfg) {
  if (cfg.p_grid.empty()) cfg.p_grid = linspace(0.7, 1.0, 41);
  if (cfg.nu_grid.empty()) cfg.nu_grid = default_nu_grid();
  if (cfg.gamma_grid.empty()) cfg.gamma_grid = linspace(0.0, kGammaMax, 13);
  if (cfg.levels.empty())
    cfg.levels = cfg.kind == ExperimentKind::Fig3 ? std::vector<NpaLevel>{NpaLevel::OnePlusAB}
                                                  : std::vector<NpaLevel>{NpaLevel::Q1, NpaLevel::Q2};
  if (cfg.modes.empty()) cfg.modes = {ConstraintMode::ViolationOnly, ConstraintMode::FullStatistics};

  require(cfg.n >= 2, "n must be >= 2");
  require(!cfg.chained_ns.empty(), "ns is empty");
  for (int n : cfg.chained_ns) require(n >= 2, "every entry of ns must be >= 2");
  check_grid(cfg.p_grid, "p_grid", 0.0, 1.0, false);
  check_grid(cfg.nu_grid, "nu_grid", 0.4, 1.0, true);
  check_grid(cfg.gamma_grid, "gamma_grid", 0.0, kGammaMax + 1e-15, false);
  require(cfg.target.x >= 0 && cfg.target.x < cfg.n && cfg.target.y >= 0 && cfg.target.y < cfg.n,
          "target setting pair out of range for n");
  require(cfg.inset_from >= 0.0 && cfg.inset_from <= 1.0, "inset_from must lie in [0, 1]");
  require(cfg.threads >= 0, "threads must be >= 0");
  try {
    cfg.swarm.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  if (cfg.kind == ExperimentKind::Bound || cfg.kind == ExperimentKind::Tightness) parse_state(cfg.state);
  return cfg;
}

namespace {

const std::set<std::string> kKeys = {"experiment", "n",      "ns",          "state",      "p_grid",
                                     "nu_grid",    "gamma_grid", "levels",  "modes",      "target",
                                     "all_settings", "inset_from", "seed",  "swarm",      "threads",
                                     "out_dir",    "cache"};
const std::set<std::string> kSwarmKeys = {"particles", "iterations", "inertia", "cognitive", "social", "restarts"};
const std::set<std::string> kGridKeys = {"start", "stop", "count"};

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where);
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidConfig, "key '" + key + "' has the wrong type");
  }
}

int get_int(const json& j, const std::string& key) {
  if (!j.is_number_integer()) throw Error(ErrorCode::InvalidConfig, "key '" + key + "' must be an integer");
  return j.get<int>();
}

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw Error(ErrorCode::InvalidConfig, "key '" + key + "' must be a number");
  return j.get<double>();
}

// Either an explicit array or {"start", "stop", "count"}.
std::vector<double> parse_grid(const json& j, const std::string& key) {
  if (j.is_array()) {
    std::vector<double> out;
    for (const auto& v : j) out.push_back(get_number(v, key));
    return out;
  }
  if (j.is_object()) {
    reject_unknown(j, kGridKeys, key);
    for (const char* k : {"start", "stop", "count"})
      if (!j.contains(k)) throw Error(ErrorCode::InvalidConfig, std::string("grid '") + key + "' lacks '" + k + "'");
    return linspace(get_number(j["start"], key), get_number(j["stop"], key), get_int(j["count"], key));
  }
  throw Error(ErrorCode::InvalidConfig, "grid '" + key + "' must be an array or {start, stop, count}");
}

ConstraintMode parse_mode(const std::string& text) {
  if (text == "violation" || text == "violation_only") return ConstraintMode::ViolationOnly;
  if (text == "full" || text == "full_statistics") return ConstraintMode::FullStatistics;
  throw Error(ErrorCode::InvalidConfig, "unknown constraint mode '" + text + "'");
}

const char* mode_key(ConstraintMode m) {
  return m == ConstraintMode::ViolationOnly ? "violation" : "full";
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  reject_unknown(doc, kKeys, "config");
  if (!doc.contains("experiment")) throw Error(ErrorCode::InvalidConfig, "config lacks 'experiment'");

  ExperimentConfig cfg;
  cfg.kind = parse_experiment(get_as<std::string>(doc["experiment"], "experiment"));
  if (doc.contains("n")) cfg.n = get_int(doc["n"], "n");
  if (doc.contains("ns")) {
    cfg.chained_ns.clear();
    if (!doc["ns"].is_array()) throw Error(ErrorCode::InvalidConfig, "key 'ns' must be an array");
    for (const auto& v : doc["ns"]) cfg.chained_ns.push_back(get_int(v, "ns"));
  }
  if (doc.contains("state")) cfg.state = get_as<std::string>(doc["state"], "state");
  if (doc.contains("p_grid")) cfg.p_grid = parse_grid(doc["p_grid"], "p_grid");
  if (doc.contains("nu_grid")) cfg.nu_grid = parse_grid(doc["nu_grid"], "nu_grid");
  if (doc.contains("gamma_grid")) cfg.gamma_grid = parse_grid(doc["gamma_grid"], "gamma_grid");
  if (doc.contains("levels")) {
    if (!doc["levels"].is_array()) throw Error(ErrorCode::InvalidConfig, "key 'levels' must be an array");
    for (const auto& v : doc["levels"]) {
      try {
        cfg.levels.push_back(parse_level(get_as<std::string>(v, "levels")));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidConfig) throw;
        throw Error(ErrorCode::InvalidConfig, e.what());
      }
    }
    require(!cfg.levels.empty(), "levels is empty");
  }
  if (doc.contains("modes")) {
    if (!doc["modes"].is_array()) throw Error(ErrorCode::InvalidConfig, "key 'modes' must be an array");
    for (const auto& v : doc["modes"]) cfg.modes.push_back(parse_mode(get_as<std::string>(v, "modes")));
    require(!cfg.modes.empty(), "modes is empty");
  }
  if (doc.contains("target")) {
    const json& t = doc["target"];
    if (!t.is_array() || t.size() != 2) throw Error(ErrorCode::InvalidConfig, "target must be [x, y]");
    cfg.target = {get_int(t[0], "target"), get_int(t[1], "target")};
  }
  if (doc.contains("all_settings")) cfg.all_settings = get_as<bool>(doc["all_settings"], "all_settings");
  if (doc.contains("inset_from")) cfg.inset_from = get_number(doc["inset_from"], "inset_from");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw Error(ErrorCode::InvalidConfig, "seed must be a nonnegative integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("swarm")) {
    const json& s = doc["swarm"];
    if (!s.is_object()) throw Error(ErrorCode::InvalidConfig, "swarm must be an object");
    reject_unknown(s, kSwarmKeys, "swarm");
    if (s.contains("particles")) cfg.swarm.particles = get_int(s["particles"], "particles");
    if (s.contains("iterations")) cfg.swarm.iterations = get_int(s["iterations"], "iterations");
    if (s.contains("restarts")) cfg.swarm.restarts = get_int(s["restarts"], "restarts");
    if (s.contains("inertia")) cfg.swarm.inertia = get_number(s["inertia"], "inertia");
    if (s.contains("cognitive")) cfg.swarm.cognitive = get_number(s["cognitive"], "cognitive");
    if (s.contains("social")) cfg.swarm.social = get_number(s["social"], "social");
  }
  if (doc.contains("threads")) cfg.threads = get_int(doc["threads"], "threads");
  if (doc.contains("out_dir")) cfg.out_dir = get_as<std::string>(doc["out_dir"], "out_dir");
  if (doc.contains("cache")) cfg.use_cache = get_as<bool>(doc["cache"], "cache");
  return resolve(cfg);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

std::string canonical_config(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  json j;
  j["experiment"] = to_string(cfg.kind);
  j["n"] = cfg.n;
  j["seed"] = cfg.seed;
  // Only the inputs the experiment reads go into the key.
  switch (cfg.kind) {
    case ExperimentKind::Bound:
    case ExperimentKind::Tightness: j["state"] = cfg.state; break;
    case ExperimentKind::Gram:
    case ExperimentKind::Witness: break;
    case ExperimentKind::Fig1: j["nu_grid"] = cfg.nu_grid; break;
    case ExperimentKind::Fig2:
      j["p_grid"] = cfg.p_grid;
      j["target"] = {cfg.target.x, cfg.target.y};
      j["all_settings"] = cfg.all_settings;
      break;
    case ExperimentKind::Fig3:
      j["p_grid"] = cfg.p_grid;
      j["gamma_grid"] = cfg.gamma_grid;
      j["ns"] = cfg.chained_ns;
      j["inset_from"] = cfg.inset_from;
      break;
  }
  if (cfg.kind == ExperimentKind::Fig2 || cfg.kind == ExperimentKind::Fig3) {
    std::vector<std::string> levels, modes;
    for (NpaLevel l : cfg.levels) levels.emplace_back(to_string(l));
    j["levels"] = levels;
    if (cfg.kind == ExperimentKind::Fig2) {
      for (ConstraintMode m : cfg.modes) modes.emplace_back(mode_key(m));
      j["modes"] = modes;
    }
  }
  if (cfg.kind == ExperimentKind::Fig1 || cfg.kind == ExperimentKind::Fig3)
    j["swarm"] = {{"particles", cfg.swarm.particles}, {"iterations", cfg.swarm.iterations},
                  {"restarts", cfg.swarm.restarts},   {"inertia", cfg.swarm.inertia},
                  {"cognitive", cfg.swarm.cognitive}, {"social", cfg.swarm.social}};
  return j.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = canonical_config(cfg) + "|" + tool_version();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string cache_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("CHAINBELL_CACHE_DIR"); env != nullptr && *env != '\0') return env;
  return (fs::path(cfg.out_dir) / ".chainbell-cache").string();
}

BlochForm parse_state(const std::string& spec) {
  auto number = [&](const std::string& text) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw Error(ErrorCode::InvalidConfig, "bad number '" + text + "' in state '" + spec + "'");
    return v;
  };
  try {
    if (spec == "singlet") return bloch_decompose(make_singlet());
    if (spec == "mixed") return bloch_decompose(make_maximally_mixed());
    if (spec.rfind("werner:", 0) == 0) {
      const double p = number(spec.substr(7));
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "Werner visibility must lie in [0, 1]");
      return bloch_decompose(make_werner(p));
    }
    if (spec.rfind("xstate:", 0) == 0) {
      const std::string rest = spec.substr(7);
      const auto comma = rest.find(',');
      if (comma == std::string::npos) throw Error(ErrorCode::InvalidConfig, "xstate needs 'xstate:NU,L'");
      return bloch_decompose(make_xstate(number(rest.substr(0, comma)), number(rest.substr(comma + 1))));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    throw Error(ErrorCode::InvalidConfig, std::string("state '") + spec + "': " + e.what());
  }
  throw Error(ErrorCode::InvalidConfig, "unknown state '" + spec + "' (singlet, mixed, werner:P, xstate:NU,L)");
}

SettingPair least_correlated_pair(const Behavior& ideal) {
  SettingPair best{0, 0};
  double smallest = std::numeric_limits<double>::infinity();
  for (int x = 0; x < ideal.n_a(); ++x)
    for (int y = 0; y < ideal.n_b(); ++y) {
      const double c = std::abs(ideal.correlator(x, y));
      if (c < smallest - 1e-9) {
        smallest = c;
        best = {x, y};
      }
    }
  return best;
}

CertResult violation_randomness(const BellCoefficients& coeffs, const Behavior& ideal, double p, NpaLevel level,
                                std::optional<SettingPair> target) {
  const Behavior noisy = noisy_behavior(ideal, p);
  const Scenario s{coeffs.n_a(), coeffs.n_b()};
  return max_prob_given_violation(s, coeffs, bell_value(noisy, coeffs), target.value_or(least_correlated_pair(ideal)),
                                  level);
}

std::vector<JGammaStrategy> j_gamma_strategies(const std::vector<double>& gammas, const SwarmConfig& swarm) {
  const BlochForm singlet = bloch_decompose(make_singlet());
  std::vector<JGammaStrategy> out;
  for (double g : gammas) {
    JGammaStrategy st;
    st.gamma = g;
    st.coeffs = j_gamma_coefficients(g);
    const SearchResult best = pso_max_violation(singlet, st.coeffs, swarm);
    st.quantum_value = best.best_value;
    st.ideal = behavior_from_state(singlet, best.best_measurements);
    out.push_back(std::move(st));
  }
  return out;
}

namespace {

// ---- output plumbing ----

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += csv_field(cells[i]);
      }
      out += "\r\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error(ErrorCode::InvalidConfig, "write failed for '" + path.string() + "'");
}

int worker_count(int requested, std::size_t tasks) {
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int n = requested > 0 ? requested : hw;
  return static_cast<int>(std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(n), tasks)));
}

// Bounded pool: `workers` threads pull task indices; results land by index
// so output order follows the grid regardless of completion order.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task) {
  std::atomic<std::size_t> next{0};
  auto drain = [&] {
    for (std::size_t i = next++; i < count; i = next++) task(i);
  };
  if (workers <= 1) {
    drain();
    return;
  }
  std::vector<std::jthread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(drain);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string setting_label(SettingPair s) {
  return "A" + std::to_string(s.x + 1) + "B" + std::to_string(s.y + 1);
}

struct Failure {
  std::string status;
  std::string note;
};

// Runs `body`; library errors become a status string instead of escaping.
std::optional<Failure> guarded(const std::function<void()>& body) {
  try {
    body();
    return std::nullopt;
  } catch (const Error& e) {
    return Failure{to_string(e.code()), e.what()};
  } catch (const std::exception& e) {
    return Failure{"Error", e.what()};
  }
}

struct CertRow {
  double p = 0.0;
  NpaLevel level = NpaLevel::Q1;
  std::string tag;  // mode or curve name
  std::string gamma;
  std::string setting;
  double bell = std::nan("");
  double p_guess = std::nan("");
  double entropy = std::nan("");
  std::string status;
  double gap = std::nan("");
  double wall = 0.0;
  std::string note;
  bool failed = false;
};

void fill_cert(CertRow& row, const CertResult& r) {
  row.p_guess = r.p_guess;
  row.entropy = r.min_entropy_bits;
  row.status = to_string(r.solver_status);
  row.gap = r.gap;
  row.setting = setting_label(r.setting);
}

void fail_row(CertRow& row, const Failure& f) {
  row.failed = true;
  row.status = f.status;
  row.note = f.note;
  row.p_guess = row.entropy = row.gap = std::nan("");
}

Table cert_table(const std::string& hash, const std::string& tag_name, const std::vector<CertRow>& rows,
                 bool with_gamma, int n) {
  Table t;
  t.header = {"config_hash", "tool_version", "n", "p", "level", tag_name};
  if (with_gamma) t.header.push_back("gamma");
  for (const char* h : {"setting", "bell_value", "p_guess", "min_entropy_bits", "status", "gap", "wall_time_s", "note"})
    t.header.emplace_back(h);
  for (const auto& r : rows) {
    std::vector<std::string> cells = {hash, tool_version(), n > 0 ? std::to_string(n) : "", fmt(r.p),
                                      to_string(r.level), r.tag};
    if (with_gamma) cells.push_back(r.gamma);
    for (std::string c : {r.setting, fmt(r.bell), fmt(r.p_guess), fmt(r.entropy), r.status, fmt(r.gap),
                          fmt(r.wall), r.note})
      cells.push_back(std::move(c));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

RunReport finish_report(const ExperimentConfig& cfg, RunReport rep, const std::vector<std::pair<std::string, std::string>>& files) {
  for (const auto& [name, content] : files) {
    const fs::path path = fs::path(cfg.out_dir) / name;
    write_file(path, content);
    rep.files.push_back(path.string());
  }
  return rep;
}

}  // namespace

RunReport run_scalar(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  RunReport rep;
  rep.hash = config_hash(cfg);
  rep.rows = 1;
  Table t;
  std::vector<std::string> values;
  std::string note = "";
  const auto t0 = std::chrono::steady_clock::now();
  std::string status = "ok";

  auto record_failure = [&](const std::optional<Failure>& f, std::size_t width) {
    if (!f) return false;
    status = f->status;
    note = f->note;
    values.assign(width, "nan");
    rep.failed_rows = 1;
    rep.summary = std::string(to_string(cfg.kind)) + " failed: " + f->note + "\n";
    return true;
  };

  switch (cfg.kind) {
    case ExperimentKind::Bound: {
      t.header = {"state", "n", "sigma_max", "degeneracy", "theorem1_bound", "tsirelson_bound", "classical_bound"};
      const auto f = guarded([&] {
        const BlochForm b = parse_state(cfg.state);
        const SvdReport svd = correlation_svd(b);
        const double bound = theorem1_bound(b, cfg.n);
        values = {cfg.state, std::to_string(cfg.n), fmt(svd.sigma_max), std::to_string(svd.degeneracy), fmt(bound),
                  fmt(tsirelson_bound(cfg.n)), fmt(classical_bound(cfg.n))};
        rep.summary = "theorem1_bound " + fmt(bound) + " (sigma_max " + fmt(svd.sigma_max) + ", n " +
                      std::to_string(cfg.n) + ")\n";
      });
      if (record_failure(f, 5)) values.insert(values.begin(), {cfg.state, std::to_string(cfg.n)});
      break;
    }
    case ExperimentKind::Tightness: {
      t.header = {"state", "n", "sufficient", "theorem1_bound", "witness_value", "reason", "alice", "bob"};
      const auto f = guarded([&] {
        const BlochForm b = parse_state(cfg.state);
        const TightnessReport tr = tightness_check(b, cfg.n);
        const double bound = theorem1_bound(b, cfg.n);
        std::string alice, bob, witness = "nan";
        if (tr.witness) {
          auto vecs = [](const std::vector<Eigen::Vector3d>& vs) {
            std::string s;
            for (const auto& v : vs) s += (s.empty() ? "" : " ") + fmt(v.x()) + ";" + fmt(v.y()) + ";" + fmt(v.z());
            return s;
          };
          alice = vecs(tr.witness->alice());
          bob = vecs(tr.witness->bob());
          witness = fmt(bell_value(b, *tr.witness, chained_coefficients(cfg.n)));
        }
        values = {cfg.state, std::to_string(cfg.n), tr.sufficient ? "true" : "false", fmt(bound), witness, tr.reason,
                  alice, bob};
        rep.summary = std::string("sufficient ") + (tr.sufficient ? "true" : "false") + ", bound " + fmt(bound) +
                      ", witness value " + witness + " (" + tr.reason + ")\n";
      });
      if (record_failure(f, 6)) values.insert(values.begin(), {cfg.state, std::to_string(cfg.n)});
      break;
    }
    case ExperimentKind::Gram: {
      t.header = {"n", "expected", "primal", "dual", "gap", "solver_status"};
      const auto f = guarded([&] {
        SdpSolver solver;
        const GramResult g = solve_gram_sdp(cfg.n, solver);
        const double expected = cfg.n * std::cos(std::numbers::pi / cfg.n);
        values = {std::to_string(cfg.n), fmt(expected), fmt(g.primal), fmt(g.dual), fmt(g.gap), to_string(g.status)};
        rep.summary = "gram primal " + fmt(g.primal) + " dual " + fmt(g.dual) + " (n cos(pi/n) = " + fmt(expected) +
                      ")\n";
      });
      if (record_failure(f, 5)) values.insert(values.begin(), std::to_string(cfg.n));
      break;
    }
    case ExperimentKind::Witness: {
      t.header = {"n", "threshold", "classical_bound", "tsirelson_bound"};
      const auto f = guarded([&] {
        const double th = werner_witness_threshold(cfg.n);
        values = {std::to_string(cfg.n), fmt(th), fmt(classical_bound(cfg.n)), fmt(tsirelson_bound(cfg.n))};
        rep.summary = "witness threshold " + fmt(th) + " (n " + std::to_string(cfg.n) + ")\n";
      });
      if (record_failure(f, 3)) values.insert(values.begin(), std::to_string(cfg.n));
      break;
    }
    default: throw Error(ErrorCode::InvalidConfig, "run_scalar only handles bound, tightness, gram and witness");
  }

  t.header.insert(t.header.begin(), {"config_hash", "tool_version"});
  for (const char* h : {"status", "wall_time_s", "note"}) t.header.emplace_back(h);
  values.insert(values.begin(), {rep.hash, tool_version()});
  values.push_back(status);
  values.push_back(fmt(seconds_since(t0)));
  values.push_back(note);
  t.rows.push_back(std::move(values));
  return finish_report(cfg, std::move(rep), {{std::string(to_string(cfg.kind)) + ".csv", t.render()}});
}

RunReport run_fig1(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  RunReport rep;
  rep.hash = config_hash(cfg);
  const std::size_t count = cfg.nu_grid.size();

  struct Row {
    double nu, l, bound = std::nan(""), pso = std::nan(""), wall = 0.0;
    long long evals = 0;
    std::string status = "ok", note;
    bool failed = false;
  };
  std::vector<Row> rows(count);
  SwarmConfig swarm = cfg.swarm;
  swarm.seed = cfg.seed;
  swarm.threads = 1;
  parallel_for(count, worker_count(cfg.threads, count), [&](std::size_t i) {
    Row& r = rows[i];
    r.nu = cfg.nu_grid[i];
    r.l = (4.0 * r.nu - 1.0) / 3.0;
    const auto t0 = std::chrono::steady_clock::now();
    const auto f = guarded([&] {
      const BlochForm b = bloch_decompose(make_xstate(r.nu, r.l));
      r.bound = theorem1_bound(b, cfg.n);
      const SearchResult s = pso_max_violation(b, chained_coefficients(cfg.n), swarm);
      r.pso = s.best_value;
      r.evals = s.evaluations;
    });
    if (f) {
      r.failed = true;
      r.status = f->status;
      r.note = f->note;
      r.bound = r.pso = std::nan("");
    }
    r.wall = seconds_since(t0);
  });

  Table t;
  t.header = {"config_hash", "tool_version", "n",           "nu",     "l",           "theorem1_bound",
              "pso_best",    "difference",   "evaluations", "status", "wall_time_s", "note"};
  PlotSeries bound{"sigma_max bound", {}, {}, palette_color(0)};
  PlotSeries pso{"PSO maximum", {}, {}, palette_color(1), false, true};
  double worst = 0.0;
  for (const Row& r : rows) {
    t.rows.push_back({rep.hash, tool_version(), std::to_string(cfg.n), fmt(r.nu), fmt(r.l), fmt(r.bound), fmt(r.pso),
                      fmt(r.bound - r.pso), std::to_string(r.evals), r.status, fmt(r.wall), r.note});
    bound.x.push_back(r.nu);
    bound.y.push_back(r.bound);
    pso.x.push_back(r.nu);
    pso.y.push_back(r.pso);
    if (r.failed) ++rep.failed_rows;
    else worst = std::max(worst, std::abs(r.bound - r.pso));
  }
  rep.rows = static_cast<int>(count);
  rep.summary = "fig1: " + std::to_string(count) + " points, max |bound - pso| = " + fmt(worst) + "\n";
  const PlotSpec spec{"Chained Bell value of X-states, n = " + std::to_string(cfg.n), "nu", "maximal Bell value",
                      {bound, pso}};
  return finish_report(cfg, std::move(rep), {{"fig1.csv", t.render()}, {"fig1.svg", render_svg(spec)}});
}

RunReport run_fig2(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  RunReport rep;
  rep.hash = config_hash(cfg);
  const Scenario s{cfg.n, cfg.n};
  const BellCoefficients coeffs = chained_coefficients(cfg.n);
  const Behavior ideal = behavior_from_state(bloch_decompose(make_singlet()), canonical_measurements(cfg.n));

  struct Task {
    double p;
    NpaLevel level;
    ConstraintMode mode;
  };
  std::vector<Task> tasks;
  for (double p : cfg.p_grid)
    for (NpaLevel l : cfg.levels)
      for (ConstraintMode m : cfg.modes) tasks.push_back({p, l, m});

  std::vector<std::vector<CertRow>> results(tasks.size());
  parallel_for(tasks.size(), worker_count(cfg.threads, tasks.size()), [&](std::size_t i) {
    const Task& task = tasks[i];
    const Behavior beh = noisy_behavior(ideal, task.p);
    CertRow base;
    base.p = task.p;
    base.level = task.level;
    base.tag = mode_key(task.mode);
    base.setting = setting_label(cfg.target);
    base.bell = bell_value(beh, coeffs);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<CertRow> out;
    const auto f = guarded([&] {
      if (task.mode == ConstraintMode::ViolationOnly) {
        CertRow row = base;
        fill_cert(row, max_prob_given_violation(s, coeffs, base.bell, cfg.target, task.level));
        out.push_back(row);
      } else if (!cfg.all_settings) {
        CertRow row = base;
        fill_cert(row, max_guess_full_statistics(s, beh, cfg.target, task.level));
        out.push_back(row);
      } else {
        const SettingSweep sweep = full_statistics_all_settings(s, beh, task.level);
        for (const CertResult& r : sweep.per_setting) {
          CertRow row = base;
          fill_cert(row, r);
          out.push_back(row);
        }
        CertRow worst = base;
        fill_cert(worst, sweep.worst);
        worst.note = "worst case over settings (" + worst.setting + ")";
        worst.setting = "worst";
        out.push_back(worst);
      }
    });
    if (f) {
      out.clear();
      CertRow row = base;
      fail_row(row, *f);
      out.push_back(row);
    }
    const double wall = seconds_since(t0);
    for (auto& r : out) r.wall = wall;
    results[i] = std::move(out);
  });

  std::vector<CertRow> rows;
  for (auto& group : results)
    for (auto& r : group) rows.push_back(std::move(r));

  std::vector<PlotSeries> series;
  const std::string target = setting_label(cfg.target);
  for (std::size_t li = 0; li < cfg.levels.size(); ++li)
    for (std::size_t mi = 0; mi < cfg.modes.size(); ++mi) {
      PlotSeries ps;
      ps.name = std::string(to_string(cfg.levels[li])) + " " + mode_key(cfg.modes[mi]);
      ps.color = palette_color(mi);
      ps.dashed = cfg.levels[li] != NpaLevel::Q2;
      for (const CertRow& r : rows)
        if (r.level == cfg.levels[li] && r.tag == mode_key(cfg.modes[mi]) && r.setting == target) {
          ps.x.push_back(r.p);
          ps.y.push_back(r.entropy);
        }
      series.push_back(std::move(ps));
    }

  for (const CertRow& r : rows) rep.failed_rows += r.failed ? 1 : 0;
  rep.rows = static_cast<int>(rows.size());
  std::ostringstream sum;
  for (const CertRow& r : rows)
    if (r.setting == target && (r.p == cfg.p_grid.front() || r.p == cfg.p_grid.back()))
      sum << "fig2 p=" << fmt(r.p) << " " << to_string(r.level) << " " << r.tag << " H=" << fmt(r.entropy) << " bits ("
          << r.status << ")\n";
  rep.summary = sum.str();
  const PlotSpec spec{"Min-entropy of the chained Bell test, setting " + target, "visibility p", "H_min (bits)",
                      series};
  const std::string csv = cert_table(rep.hash, "mode", rows, false, cfg.n).render();
  return finish_report(cfg, std::move(rep), {{"fig2.csv", csv}, {"fig2.svg", render_svg(spec)}});
}

RunReport run_fig3(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  RunReport rep;
  rep.hash = config_hash(cfg);
  const BlochForm singlet = bloch_decompose(make_singlet());

  struct Curve {
    std::string name;
    BellCoefficients coeffs;
    Behavior ideal{2, 2};
  };
  std::vector<Curve> curves;
  curves.push_back({"chsh", chained_coefficients(2), behavior_from_state(singlet, canonical_measurements(2))});
  for (int n : cfg.chained_ns)
    curves.push_back({"chained" + std::to_string(n), chained_coefficients(n),
                      behavior_from_state(singlet, canonical_measurements(n))});

  SwarmConfig swarm = cfg.swarm;
  swarm.seed = cfg.seed;
  swarm.threads = 1;
  std::vector<JGammaStrategy> strategies(cfg.gamma_grid.size());
  std::vector<std::optional<Failure>> strategy_failure(cfg.gamma_grid.size());
  parallel_for(cfg.gamma_grid.size(), worker_count(cfg.threads, cfg.gamma_grid.size()), [&](std::size_t i) {
    strategy_failure[i] = guarded([&] { strategies[i] = j_gamma_strategies({cfg.gamma_grid[i]}, swarm).front(); });
  });

  struct Task {
    double p;
    NpaLevel level;
    int curve;  // index into curves, or -1 for the J_gamma envelope
  };
  std::vector<Task> tasks;
  for (double p : cfg.p_grid)
    for (NpaLevel l : cfg.levels) {
      for (int c = 0; c < static_cast<int>(curves.size()); ++c) tasks.push_back({p, l, c});
      tasks.push_back({p, l, -1});
    }

  std::vector<CertRow> rows(tasks.size());
  std::vector<std::vector<CertRow>> gamma_rows(tasks.size());
  parallel_for(tasks.size(), worker_count(cfg.threads, tasks.size()), [&](std::size_t i) {
    const Task& task = tasks[i];
    CertRow& row = rows[i];
    row.p = task.p;
    row.level = task.level;
    const auto t0 = std::chrono::steady_clock::now();
    if (task.curve >= 0) {
      const Curve& c = curves[static_cast<std::size_t>(task.curve)];
      row.tag = c.name;
      row.setting = setting_label(least_correlated_pair(c.ideal));
      row.bell = bell_value(noisy_behavior(c.ideal, task.p), c.coeffs);
      if (const auto f = guarded([&] { fill_cert(row, violation_randomness(c.coeffs, c.ideal, task.p, task.level)); }))
        fail_row(row, *f);
    } else {
      row.tag = "jgamma";
      // The envelope keeps the best gamma; per-gamma rows go to their own table.
      bool any = false;
      for (std::size_t g = 0; g < strategies.size(); ++g) {
        CertRow gr;
        gr.p = task.p;
        gr.level = task.level;
        gr.tag = "jgamma";
        gr.gamma = fmt(cfg.gamma_grid[g]);
        const auto t1 = std::chrono::steady_clock::now();
        if (strategy_failure[g]) {
          fail_row(gr, *strategy_failure[g]);
        } else {
          const JGammaStrategy& st = strategies[g];
          gr.setting = setting_label(least_correlated_pair(st.ideal));
          gr.bell = bell_value(noisy_behavior(st.ideal, task.p), st.coeffs);
          if (const auto f = guarded([&] { fill_cert(gr, violation_randomness(st.coeffs, st.ideal, task.p, task.level)); }))
            fail_row(gr, *f);
        }
        gr.wall = seconds_since(t1);
        if (!gr.failed && (!any || gr.entropy > row.entropy)) {
          const double wall = row.wall;
          row = gr;
          row.wall = wall;
          any = true;
        }
        gamma_rows[i].push_back(std::move(gr));
      }
      if (!any) fail_row(row, Failure{"Error", "no gamma produced a result"});
    }
    row.wall = seconds_since(t0);
  });

  std::vector<CertRow> per_gamma;
  for (auto& g : gamma_rows)
    for (auto& r : g) per_gamma.push_back(std::move(r));
  for (const CertRow& r : rows) rep.failed_rows += r.failed ? 1 : 0;
  rep.rows = static_cast<int>(rows.size());

  auto plot = [&](double from, const std::string& title) {
    std::vector<PlotSeries> series;
    std::vector<std::string> names;
    for (const Curve& c : curves) names.push_back(c.name);
    names.push_back("jgamma");
    for (NpaLevel l : cfg.levels)
      for (std::size_t k = 0; k < names.size(); ++k) {
        PlotSeries ps;
        ps.name = names[k] == "jgamma" ? "J_gamma (best gamma)" : names[k];
        if (cfg.levels.size() > 1) ps.name += std::string(" ") + to_string(l);
        ps.color = palette_color(k);
        ps.dashed = names[k] == "jgamma";
        for (const CertRow& r : rows)
          if (r.level == l && r.tag == names[k] && r.p >= from) {
            ps.x.push_back(r.p);
            ps.y.push_back(r.entropy);
          }
        series.push_back(std::move(ps));
      }
    return render_svg(PlotSpec{title, "visibility p", "H_min (bits)", series});
  };

  std::vector<CertRow> inset;
  for (const CertRow& r : rows)
    if (r.p >= cfg.inset_from) inset.push_back(r);

  std::ostringstream sum;
  for (const CertRow& r : rows)
    if (r.p == cfg.p_grid.back())
      sum << "fig3 p=" << fmt(r.p) << " " << r.tag << (r.gamma.empty() ? "" : " gamma=" + r.gamma) << " H="
          << fmt(r.entropy) << " bits (" << r.status << ")\n";
  rep.summary = sum.str();

  const std::string hash = rep.hash;
  return finish_report(cfg, std::move(rep),
                       {{"fig3.csv", cert_table(hash, "curve", rows, true, 0).render()},
                        {"fig3_inset.csv", cert_table(hash, "curve", inset, true, 0).render()},
                        {"fig3_jgamma.csv", cert_table(hash, "curve", per_gamma, true, 2).render()},
                        {"fig3.svg", plot(0.0, "Randomness from chained Bell, CHSH and J_gamma tests")},
                        {"fig3_inset.svg", plot(cfg.inset_from, "Randomness near full visibility")}});
}

RunReport run_experiment(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  const std::string hash = config_hash(cfg);
  const fs::path entry = fs::path(cache_dir(cfg)) / hash;
  const fs::path manifest = entry / "manifest.json";

  if (cfg.use_cache && fs::exists(manifest)) {
    std::ifstream in(manifest);
    json m = json::parse(in, nullptr, false);
    if (!m.is_discarded() && m.contains("files") && m.contains("hash") && m["hash"] == hash) {
      RunReport rep;
      rep.hash = hash;
      rep.from_cache = true;
      rep.rows = m.value("rows", 0);
      rep.failed_rows = m.value("failed_rows", 0);
      rep.summary = m.value("summary", std::string());
      bool complete = true;
      for (const auto& name : m["files"]) {
        const fs::path src = entry / name.get<std::string>();
        if (!fs::exists(src)) {
          complete = false;
          break;
        }
        const fs::path dst = fs::path(cfg.out_dir) / name.get<std::string>();
        std::error_code ec;
        fs::create_directories(dst.parent_path().empty() ? fs::path(".") : dst.parent_path(), ec);
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing, ec);
        if (ec) throw Error(ErrorCode::InvalidConfig, "cannot write '" + dst.string() + "': " + ec.message());
        rep.files.push_back(dst.string());
      }
      if (complete) return rep;
    }
  }

  RunReport rep;
  switch (cfg.kind) {
    case ExperimentKind::Fig1: rep = run_fig1(cfg); break;
    case ExperimentKind::Fig2: rep = run_fig2(cfg); break;
    case ExperimentKind::Fig3: rep = run_fig3(cfg); break;
    default: rep = run_scalar(cfg); break;
  }

  // Only clean runs are cached so that a failed point is retried next time.
  if (cfg.use_cache && rep.failed_rows == 0) {
    std::error_code ec;
    fs::create_directories(entry, ec);
    if (!ec) {
      json m;
      m["hash"] = hash;
      m["config"] = json::parse(canonical_config(cfg));
      m["tool_version"] = tool_version();
      m["rows"] = rep.rows;
      m["failed_rows"] = rep.failed_rows;
      m["summary"] = rep.summary;
      m["files"] = json::array();
      for (const auto& f : rep.files) {
        const std::string name = fs::path(f).filename().string();
        fs::copy_file(f, entry / name, fs::copy_options::overwrite_existing, ec);
        m["files"].push_back(name);
      }
      if (!ec) write_file(manifest, m.dump(2) + "\n");
    }
  }
  return rep;
}

}  // namespace chainbell
