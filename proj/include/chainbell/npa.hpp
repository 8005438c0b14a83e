#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chainbell/chained.hpp"
#include "chainbell/sdp.hpp"

namespace chainbell {

enum class NpaLevel { Q1, OnePlusAB, Q2 };

const char* to_string(NpaLevel level);
/// Accepts "q1", "1+ab", "q2" (case-insensitive). Throws InvalidArgument.
NpaLevel parse_level(const std::string& text);

enum class ConstraintMode { ViolationOnly, FullStatistics };
const char* to_string(ConstraintMode mode);

/// Whether the observed Bell value is imposed as "= I" or as ">= I".
enum class ViolationConstraint { Equal, AtLeast };

struct Scenario {
  int n_a = 2;
  int n_b = 2;
};

struct SettingPair {
  int x = 0;
  int y = 0;
};

/// Operator word over outcome-(+1) projectors. Alice's P^A_x has id x,
/// Bob's P^B_y has id n_a + y. The empty word is the identity.
using Word = std::vector<int>;

/// A/B commutation (A part first, order inside each party kept) followed by
/// collapsing adjacent repeats (P^2 = P).
Word reduce_word(const Word& w, const Scenario& s);
/// The smaller of reduce(w) and reduce(w^dagger): real moment matrices
/// identify a word with its adjoint.
Word canonical_word(const Word& w, const Scenario& s);
std::string word_label(const Word& w, const Scenario& s);

struct MonomialBasis {
  Scenario scenario;
  NpaLevel level = NpaLevel::Q1;
  std::vector<Word> words;
  std::map<Word, int> index;
};

MonomialBasis build_basis(const Scenario& s, NpaLevel level);

/// Gamma_ij = <w_i^dagger w_j>, with entries sharing a canonical word tied
/// to one moment variable. Moment 0 is always the identity.
struct MomentMatrix {
  MonomialBasis basis;
  std::vector<Word> moments;
  std::map<Word, int> moment_index;
  Eigen::MatrixXi entry;  // dim x dim, moment index per entry

  int dim() const { return static_cast<int>(entry.rows()); }
  int identity() const { return 0; }
  int alice(int x) const;
  int bob(int y) const;
  int joint(int x, int y) const;
};

MomentMatrix build_moment_matrix(const MonomialBasis& basis);

/// Affine form over the program's variables.
struct LinearForm {
  std::map<int, double> terms;
  double constant = 0.0;

  LinearForm& add(int var, double coef);
};

/// One or more moment blocks sharing a structure, optional scalar slacks
/// (each a 1x1 PSD block), affine equalities, and an objective to maximize.
struct MomentProgram {
  MomentMatrix structure;
  int blocks = 1;
  int slacks = 0;
  std::vector<std::pair<LinearForm, double>> equalities;  // form == value
  LinearForm objective;

  int moments_per_block() const { return static_cast<int>(structure.moments.size()); }
  int var(int block, int moment) const { return block * moments_per_block() + moment; }
  int slack_var(int k) const { return blocks * moments_per_block() + k; }
  int num_vars() const { return blocks * moments_per_block() + slacks; }

  /// p(ab|xy) of block `block`; subnormalized when the identity moment is not pinned.
  LinearForm probability(int block, int x, int y, int a, int b) const;
  /// <A_x B_y> of block `block`.
  LinearForm correlator(int block, int x, int y) const;
};

struct MomentSolution {
  double value = 0.0;        // certified side: tr(F0 X) + constant
  double attained = 0.0;     // moment side: objective at the returned moments
  SolverStatus status = SolverStatus::NumericalTrouble;
  double gap = 0.0;
  int iterations = 0;
  Eigen::VectorXd moments;             // all program variables
  std::vector<Eigen::MatrixXd> gamma;  // one per moment block
  double min_gamma_eig = 0.0;
};

/// Eliminates the equalities, builds the SDP and solves it. Throws
/// Infeasible when the equalities are inconsistent or no PSD moment
/// assignment exists.
MomentSolution solve_moment_program(const MomentProgram& program, const SdpOptions& opts);

struct CertResult {
  double p_guess = 1.0;
  double min_entropy_bits = 0.0;
  NpaLevel level = NpaLevel::Q1;
  SettingPair setting;
  ConstraintMode constraint_mode = ConstraintMode::ViolationOnly;
  SolverStatus solver_status = SolverStatus::NumericalTrouble;
  double gap = 0.0;
  /// Violation mode: optimum per outcome pair (++, +-, -+, --).
  std::vector<double> per_outcome;
  /// Full-statistics mode: the four Eve-conditioned moment blocks.
  std::vector<Eigen::MatrixXd> gamma;
};

/// SDP tolerances used by the certifier unless overridden.
SdpOptions default_npa_options();

/// Maximum Bell value over the level's relaxation (moment side, attained).
double relaxation_max(const Scenario& s, const BellCoefficients& coeffs, NpaLevel level,
                      const SdpOptions& opts = default_npa_options());

/// max_ab of max p(ab|target) subject to the Bell value being I, one SDP per
/// outcome pair. Throws Infeasible when I exceeds the relaxation's range.
CertResult max_prob_given_violation(const Scenario& s, const BellCoefficients& coeffs, double observed,
                                    SettingPair target, NpaLevel level,
                                    ViolationConstraint mode = ViolationConstraint::Equal,
                                    const SdpOptions& opts = default_npa_options());

/// Eve-decomposition guessing probability compatible with the complete
/// behavior. Throws Signaling for behaviors off the no-signaling set and
/// Infeasible when the behavior lies outside the relaxation.
CertResult max_guess_full_statistics(const Scenario& s, const Behavior& beh, SettingPair target,
                                     NpaLevel level, const SdpOptions& opts = default_npa_options());

struct SettingSweep {
  std::vector<CertResult> per_setting;  // row-major over (x, y)
  CertResult worst;                     // largest p_guess
};

/// Full-statistics certification at every setting pair plus the worst case.
SettingSweep full_statistics_all_settings(const Scenario& s, const Behavior& beh, NpaLevel level,
                                          const SdpOptions& opts = default_npa_options());

/// Constraints pinning the behavior moments of block 0 (plus normalization).
std::vector<std::pair<LinearForm, double>> behavior_constraints(const MomentProgram& program,
                                                                const Behavior& beh);

/// -log2 p_guess. Throws InvalidArgument unless 0 < p_guess <= 1 (+1e-9 slack, clamped).
double min_entropy(double p_guess);

}  // namespace chainbell
