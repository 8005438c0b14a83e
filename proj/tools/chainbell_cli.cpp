// chainbell: command-line driver for the chained Bell experiments.
//
// Exit status: 0 when every row succeeded, 2 when a sweep finished with some
// failed rows, 1 on a bad configuration or an unexpected error.

#include <charconv>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chainbell/error.hpp"
#include "chainbell/experiment.hpp"

namespace cb = chainbell;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> levels;
  std::vector<std::string> modes;
  std::optional<std::string> out_dir;
  std::optional<int> n;
  std::vector<int> ns;
  std::optional<std::string> state;
  std::optional<std::string> p_grid, nu_grid, gamma_grid;
  std::vector<int> target;
  bool all_settings = false;
  std::optional<double> inset_from;
  std::optional<int> threads;
  std::optional<int> particles, iterations, restarts;
  bool no_cache = false;
  bool quiet = false;
};

double to_double(const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw cb::Error(cb::ErrorCode::InvalidConfig, "bad number '" + text + "'");
  return v;
}

// "start:stop:count" or a comma-separated list.
std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  const char sep = text.find(':') != std::string::npos ? ':' : ',';
  std::size_t begin = 0;
  while (true) {
    const std::size_t end = text.find(sep, begin);
    parts.push_back(text.substr(begin, end - begin));
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  if (sep == ':') {
    if (parts.size() != 3) throw cb::Error(cb::ErrorCode::InvalidConfig, "grid '" + text + "' is not start:stop:count");
    const double count = to_double(parts[2]);
    if (count != static_cast<int>(count)) throw cb::Error(cb::ErrorCode::InvalidConfig, "grid count must be an integer");
    return cb::linspace(to_double(parts[0]), to_double(parts[1]), static_cast<int>(count));
  }
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(to_double(p));
  return out;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path, "JSON config file; inline flags override its values")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "RNG seed for the swarm search");
  sub->add_option("--level", f.levels, "NPA level: q1, 1+ab or q2 (repeatable)")->delimiter(',');
  sub->add_option("--out-dir", f.out_dir, "Directory for CSV and SVG output");
  sub->add_option("--threads", f.threads, "Sweep workers (0 = hardware concurrency)");
  sub->add_flag("--no-cache", f.no_cache, "Always recompute and do not store results");
  sub->add_flag("-q,--quiet", f.quiet, "Only print errors");
}

cb::ExperimentConfig build_config(cb::ExperimentKind kind, const Flags& f) {
  cb::ExperimentConfig cfg;
  if (!f.config_path.empty()) {
    cfg = cb::load_config(f.config_path);
    if (cfg.kind != kind)
      throw cb::Error(cb::ErrorCode::InvalidConfig, std::string("config is for '") + cb::to_string(cfg.kind) +
                                                        "' but the subcommand is '" + cb::to_string(kind) + "'");
  }
  cfg.kind = kind;
  if (f.seed) cfg.seed = *f.seed;
  if (!f.levels.empty()) {
    cfg.levels.clear();
    for (const auto& l : f.levels) {
      try {
        cfg.levels.push_back(cb::parse_level(l));
      } catch (const cb::Error& e) {
        throw cb::Error(cb::ErrorCode::InvalidConfig, e.what());
      }
    }
  }
  if (!f.modes.empty()) {
    cfg.modes.clear();
    for (const auto& m : f.modes) {
      if (m == "violation") cfg.modes.push_back(cb::ConstraintMode::ViolationOnly);
      else if (m == "full") cfg.modes.push_back(cb::ConstraintMode::FullStatistics);
      else throw cb::Error(cb::ErrorCode::InvalidConfig, "unknown mode '" + m + "' (violation or full)");
    }
  }
  if (f.out_dir) cfg.out_dir = *f.out_dir;
  if (f.n) cfg.n = *f.n;
  if (!f.ns.empty()) cfg.chained_ns = f.ns;
  if (f.state) cfg.state = *f.state;
  if (f.p_grid) cfg.p_grid = parse_grid(*f.p_grid);
  if (f.nu_grid) cfg.nu_grid = parse_grid(*f.nu_grid);
  if (f.gamma_grid) cfg.gamma_grid = parse_grid(*f.gamma_grid);
  if (!f.target.empty()) {
    if (f.target.size() != 2) throw cb::Error(cb::ErrorCode::InvalidConfig, "--target takes x,y");
    cfg.target = {f.target[0], f.target[1]};
  }
  if (f.all_settings) cfg.all_settings = true;
  if (f.inset_from) cfg.inset_from = *f.inset_from;
  if (f.threads) cfg.threads = *f.threads;
  if (f.particles) cfg.swarm.particles = *f.particles;
  if (f.iterations) cfg.swarm.iterations = *f.iterations;
  if (f.restarts) cfg.swarm.restarts = *f.restarts;
  if (f.no_cache) cfg.use_cache = false;
  return cb::resolve(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chained Bell inequalities: bounds, tightness and certified randomness"};
  app.set_version_flag("--version", std::string(cb::tool_version()));
  app.require_subcommand(1);

  Flags f;
  struct Entry {
    cb::ExperimentKind kind;
    const char* help;
  };
  const std::vector<Entry> entries = {
      {cb::ExperimentKind::Bound, "Largest chained Bell value of a two-qubit state"},
      {cb::ExperimentKind::Tightness, "Check whether the bound is attained and print the optimal measurements"},
      {cb::ExperimentKind::Gram, "Solve the Gram-matrix SDP for the quantum maximum"},
      {cb::ExperimentKind::Witness, "Werner visibility above which the chained inequality detects entanglement"},
      {cb::ExperimentKind::Fig1, "Bound versus swarm search over X-states"},
      {cb::ExperimentKind::Fig2, "Certified min-entropy of the chained test versus visibility"},
      {cb::ExperimentKind::Fig3, "Randomness of chained, CHSH and J_gamma tests versus visibility"}};

  std::vector<std::pair<CLI::App*, cb::ExperimentKind>> subs;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(cb::to_string(e.kind), e.help);
    add_common(sub, f);
    switch (e.kind) {
      case cb::ExperimentKind::Bound:
      case cb::ExperimentKind::Tightness:
        sub->add_option("--state", f.state, "singlet, mixed, werner:P or xstate:NU,L");
        sub->add_option("--n", f.n, "Number of settings per party");
        break;
      case cb::ExperimentKind::Gram:
      case cb::ExperimentKind::Witness: sub->add_option("--n", f.n, "Number of settings per party"); break;
      case cb::ExperimentKind::Fig1:
        sub->add_option("--n", f.n, "Number of settings per party");
        sub->add_option("--nu-grid", f.nu_grid, "start:stop:count or a comma list, inside (0.4, 1)");
        break;
      case cb::ExperimentKind::Fig2:
        sub->add_option("--n", f.n, "Number of settings per party");
        sub->add_option("--p-grid", f.p_grid, "start:stop:count or a comma list");
        sub->add_option("--mode", f.modes, "violation or full (repeatable)")->delimiter(',');
        sub->add_option("--target", f.target, "Certified setting pair x,y (0-based)")->delimiter(',');
        sub->add_flag("--all-settings", f.all_settings, "Full statistics for every pair plus the worst case");
        break;
      case cb::ExperimentKind::Fig3:
        sub->add_option("--ns", f.ns, "Chained curves to draw, e.g. 3,4,5")->delimiter(',');
        sub->add_option("--p-grid", f.p_grid, "start:stop:count or a comma list");
        sub->add_option("--gamma-grid", f.gamma_grid, "start:stop:count or a comma list inside [0, pi/12]");
        sub->add_option("--inset-from", f.inset_from, "Lower visibility edge of the inset");
        break;
    }
    if (e.kind == cb::ExperimentKind::Fig1 || e.kind == cb::ExperimentKind::Fig3) {
      sub->add_option("--particles", f.particles, "Swarm size");
      sub->add_option("--iterations", f.iterations, "Swarm iterations per restart");
      sub->add_option("--restarts", f.restarts, "Independent swarm restarts");
    }
    subs.emplace_back(sub, e.kind);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  cb::ExperimentKind kind = cb::ExperimentKind::Bound;
  for (const auto& [sub, k] : subs)
    if (sub->parsed()) kind = k;

  cb::ExperimentConfig cfg;
  try {
    cfg = build_config(kind, f);
  } catch (const cb::Error& e) {
    std::cerr << "chainbell: config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const cb::RunReport rep = cb::run_experiment(cfg);
    if (!f.quiet) {
      std::cout << rep.summary;
      std::cout << "config " << rep.hash << (rep.from_cache ? " (cached)" : "") << ", " << rep.rows << " rows, "
                << rep.failed_rows << " failed\n";
      for (const auto& file : rep.files) std::cout << "wrote " << file << '\n';
    }
    if (rep.failed_rows > 0) {
      std::cerr << "chainbell: " << rep.failed_rows << " of " << rep.rows << " rows failed; see the status column\n";
      return kExitPartial;
    }
    return kExitOk;
  } catch (const cb::Error& e) {
    std::cerr << "chainbell: " << cb::to_string(e.code()) << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "chainbell: " << e.what() << '\n';
    return kExitConfig;
  }
}
