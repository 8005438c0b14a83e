#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chainbell/chained.hpp"
#include "chainbell/npa.hpp"
#include "chainbell/search.hpp"

namespace chainbell {

enum class ExperimentKind { Bound, Tightness, Gram, Witness, Fig1, Fig2, Fig3 };

const char* to_string(ExperimentKind kind);
/// Accepts the subcommand names and the long aliases fig1_xstate,
/// fig2_randomness, fig3_compare. Throws InvalidConfig.
ExperimentKind parse_experiment(const std::string& name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Bound;
  int n = 3;
  std::vector<int> chained_ns{3, 4, 5};  // fig3 chained curves
  std::string state = "singlet";         // singlet | mixed | werner:P | xstate:NU,L
  std::vector<double> p_grid;
  std::vector<double> nu_grid;
  std::vector<double> gamma_grid;
  std::vector<NpaLevel> levels;
  std::vector<ConstraintMode> modes;
  SettingPair target{0, 0};  // fig2 certified pair
  bool all_settings = false;  // fig2: every pair in full-statistics mode plus the worst case
  double inset_from = 0.95;   // fig3 inset table lower edge
  std::uint64_t seed = 1;
  SwarmConfig swarm;
  int threads = 0;  // sweep workers; 0 means hardware concurrency
  std::string out_dir = ".";
  bool use_cache = true;
};

/// Config for `kind` with every grid and list at its default.
ExperimentConfig default_config(ExperimentKind kind);

/// Fills empty grids and lists with their defaults, then checks ranges and
/// strict monotonicity. Throws InvalidConfig.
ExperimentConfig resolve(ExperimentConfig cfg);

/// Parses one JSON document. Unknown keys, wrong types and bad values throw InvalidConfig.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Resolved config as sorted, whitespace-free JSON; out_dir, threads and
/// use_cache are left out since they do not change results.
std::string canonical_config(const ExperimentConfig& cfg);

/// FNV-1a 64 over the canonical config and the tool version, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

const char* tool_version();

/// CHAINBELL_CACHE_DIR when set, else <out_dir>/.chainbell-cache.
std::string cache_dir(const ExperimentConfig& cfg);

/// "singlet", "mixed", "werner:P" or "xstate:NU,L". Throws InvalidConfig.
BlochForm parse_state(const std::string& spec);

struct RunReport {
  std::string hash;
  std::vector<std::string> files;  // written paths
  int rows = 0;
  int failed_rows = 0;
  bool from_cache = false;
  std::string summary;  // one human-readable line per result
};

/// Runs the experiment, writing CSV (and SVG for figures) into out_dir.
/// Row-level failures are recorded in the CSV and counted, never thrown.
RunReport run_experiment(const ExperimentConfig& cfg);

/// Experiment-specific runners used by run_experiment (no caching).
RunReport run_scalar(const ExperimentConfig& cfg);
RunReport run_fig1(const ExperimentConfig& cfg);
RunReport run_fig2(const ExperimentConfig& cfg);
RunReport run_fig3(const ExperimentConfig& cfg);

/// Pair with the smallest |<A_x B_y>| in the ideal behavior (first in
/// row-major order on ties): the setting that certifies the most randomness
/// at full visibility.
SettingPair least_correlated_pair(const Behavior& ideal);

/// Violation-only certification of the noisy version of `ideal` at
/// visibility p. Without a target the least correlated pair is used.
CertResult violation_randomness(const BellCoefficients& coeffs, const Behavior& ideal, double p, NpaLevel level,
                                std::optional<SettingPair> target = std::nullopt);

struct JGammaStrategy {
  double gamma = 0.0;
  BellCoefficients coeffs;
  Behavior ideal{2, 2};
  double quantum_value = 0.0;
};

/// Singlet measurements maximizing J_gamma, found by the swarm, per gamma.
std::vector<JGammaStrategy> j_gamma_strategies(const std::vector<double>& gammas, const SwarmConfig& swarm);

/// Evenly spaced points from start to stop inclusive.
std::vector<double> linspace(double start, double stop, int count);

}  // namespace chainbell
