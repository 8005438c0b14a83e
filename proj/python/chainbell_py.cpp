#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "chainbell/chained.hpp"
#include "chainbell/error.hpp"
#include "chainbell/experiment.hpp"
#include "chainbell/npa.hpp"
#include "chainbell/qstate.hpp"
#include "chainbell/search.hpp"

namespace py = pybind11;
namespace cb = chainbell;

namespace {

std::vector<std::array<double, 3>> as_lists(const std::vector<Eigen::Vector3d>& vs) {
  std::vector<std::array<double, 3>> out;
  for (const auto& v : vs) out.push_back({v.x(), v.y(), v.z()});
  return out;
}

py::dict cert_dict(const cb::CertResult& r) {
  py::dict d;
  d["p_guess"] = r.p_guess;
  d["min_entropy_bits"] = r.min_entropy_bits;
  d["level"] = cb::to_string(r.level);
  d["mode"] = cb::to_string(r.constraint_mode);
  d["setting"] = py::make_tuple(r.setting.x, r.setting.y);
  d["status"] = cb::to_string(r.solver_status);
  d["gap"] = r.gap;
  d["per_outcome"] = r.per_outcome;
  return d;
}

cb::SettingPair pair(const std::pair<int, int>& t) { return {t.first, t.second}; }

}  // namespace

PYBIND11_MODULE(_chainbell, m) {
  m.doc() = "Chained Bell inequalities: bounds, measurement search and NPA randomness certification";
  py::register_exception<cb::Error>(m, "ChainbellError", PyExc_ValueError);

  m.attr("__version__") = cb::tool_version();

  m.def("classical_bound", &cb::classical_bound, py::arg("n"));
  m.def("tsirelson_bound", &cb::tsirelson_bound, py::arg("n"));
  m.def("werner_witness_threshold", &cb::werner_witness_threshold, py::arg("n"));

  m.def(
      "bell_bound", [](const std::string& state, int n) { return cb::theorem1_bound(cb::parse_state(state), n); },
      py::arg("state"), py::arg("n"),
      "Largest chained Bell value of a state given as singlet, mixed, werner:P or xstate:NU,L.");

  m.def(
      "sigma_max", [](const std::string& state) { return cb::correlation_svd(cb::parse_state(state)).sigma_max; },
      py::arg("state"));

  m.def(
      "tightness",
      [](const std::string& state, int n) {
        const cb::BlochForm b = cb::parse_state(state);
        const cb::TightnessReport tr = cb::tightness_check(b, n);
        py::dict d;
        d["sufficient"] = tr.sufficient;
        d["reason"] = tr.reason;
        d["bound"] = cb::theorem1_bound(b, n);
        if (tr.witness) {
          d["alice"] = as_lists(tr.witness->alice());
          d["bob"] = as_lists(tr.witness->bob());
          d["value"] = cb::bell_value(b, *tr.witness, cb::chained_coefficients(n));
        }
        return d;
      },
      py::arg("state"), py::arg("n"));

  m.def(
      "gram",
      [](int n) {
        cb::SdpSolver solver;
        const cb::GramResult g = cb::solve_gram_sdp(n, solver);
        py::dict d;
        d["primal"] = g.primal;
        d["dual"] = g.dual;
        d["gap"] = g.gap;
        d["status"] = cb::to_string(g.status);
        return d;
      },
      py::arg("n"));

  m.def(
      "certify_violation",
      [](int n, double bell_value, std::pair<int, int> target, const std::string& level) {
        const cb::NpaLevel lv = cb::parse_level(level);
        cb::CertResult r;
        {
          py::gil_scoped_release release;
          r = cb::max_prob_given_violation({n, n}, cb::chained_coefficients(n), bell_value, pair(target), lv);
        }
        return cert_dict(r);
      },
      py::arg("n"), py::arg("bell_value"), py::arg("target") = std::make_pair(0, 0), py::arg("level") = "q1",
      "Guessing probability of outcome pair `target` given only the chained Bell value.");

  m.def(
      "certify_noisy_singlet",
      [](int n, double p, std::pair<int, int> target, const std::string& level, const std::string& mode) {
        const cb::Behavior ideal =
            cb::behavior_from_state(cb::bloch_decompose(cb::make_singlet()), cb::canonical_measurements(n));
        const cb::Behavior beh = cb::noisy_behavior(ideal, p);
        const cb::NpaLevel lv = cb::parse_level(level);
        if (mode != "violation" && mode != "full")
          throw cb::Error(cb::ErrorCode::InvalidArgument, "mode must be 'violation' or 'full'");
        cb::CertResult r;
        {
          py::gil_scoped_release release;
          r = mode == "full" ? cb::max_guess_full_statistics({n, n}, beh, pair(target), lv)
                             : cb::max_prob_given_violation({n, n}, cb::chained_coefficients(n),
                                                            cb::bell_value(beh, cb::chained_coefficients(n)),
                                                            pair(target), lv);
        }
        return cert_dict(r);
      },
      py::arg("n"), py::arg("p"), py::arg("target") = std::make_pair(0, 0), py::arg("level") = "q1",
      py::arg("mode") = "violation");

  m.def(
      "search_max_violation",
      [](const std::string& state, int n, int particles, int iterations, int restarts, std::uint64_t seed) {
        cb::SwarmConfig cfg;
        cfg.particles = particles;
        cfg.iterations = iterations;
        cfg.restarts = restarts;
        cfg.seed = seed;
        const cb::BlochForm b = cb::parse_state(state);
        cb::SearchResult r;
        {
          py::gil_scoped_release release;
          r = cb::pso_max_violation(b, cb::chained_coefficients(n), cfg);
        }
        py::dict d;
        d["value"] = r.best_value;
        d["history"] = r.history;
        d["evaluations"] = r.evaluations;
        d["alice"] = as_lists(r.best_measurements.alice());
        d["bob"] = as_lists(r.best_measurements.bob());
        return d;
      },
      py::arg("state"), py::arg("n"), py::arg("particles") = 50, py::arg("iterations") = 500,
      py::arg("restarts") = 10, py::arg("seed") = 1);

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& out_dir) {
        cb::ExperimentConfig cfg = cb::config_from_json(config_json);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cb::RunReport rep;
        {
          py::gil_scoped_release release;
          rep = cb::run_experiment(cfg);
        }
        py::dict d;
        d["hash"] = rep.hash;
        d["files"] = rep.files;
        d["rows"] = rep.rows;
        d["failed_rows"] = rep.failed_rows;
        d["from_cache"] = rep.from_cache;
        d["summary"] = rep.summary;
        return d;
      },
      py::arg("config_json"), py::arg("out_dir") = "",
      "Runs an experiment from a JSON config (same keys as the CLI) and returns the run report.");
}
