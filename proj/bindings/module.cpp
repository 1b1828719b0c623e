// Python surface of the toolkit.  The heavy objects stay on the C++ side;
// configs, design bundles and reports cross the boundary as JSON strings
// (the same documents the CLI reads and writes), and the handful of
// array-valued helpers go through numpy.  The smpc python package wraps
// these in dict-in/dict-out functions.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "smpc/config.hpp"
#include "smpc/errors.hpp"
#include "smpc/simulator.hpp"
#include "smpc/system.hpp"
#include "smpc/tightening.hpp"

namespace py = pybind11;

namespace {

smpc::DesignBundle design_or_load(const smpc::ProjectConfig& config,
                                  const std::string& bundle_json) {
  if (bundle_json.empty()) return smpc::design_from_config(config);
  return smpc::bundle_from_json(bundle_json);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Chance-constrained receding-horizon control: offline constraint "
      "tightening and terminal-set design plus a seeded closed-loop "
      "Monte-Carlo simulator.";
  m.attr("__version__") = "0.1.0";

  py::register_exception<smpc::ConfigError>(m, "ConfigError",
                                            PyExc_ValueError);
  py::register_exception<smpc::DesignError>(m, "DesignError",
                                            PyExc_RuntimeError);
  py::register_exception<smpc::InvariantViolation>(m, "InvariantViolation",
                                                   PyExc_RuntimeError);
  py::register_exception<smpc::NumericalError>(m, "NumericalError",
                                               PyExc_ArithmeticError);

  m.def(
      "design_json",
      [](const std::string& config_json) {
        const auto config = smpc::parse_config(config_json);
        return smpc::bundle_to_json(smpc::design_from_config(config));
      },
      py::arg("config_json"),
      "Run the offline design stage for every controller in the config; "
      "returns the design bundle as JSON (the CLI's design.json).");

  m.def(
      "simulate_json",
      [](const std::string& config_json, const std::string& bundle_json) {
        const auto config = smpc::parse_config(config_json);
        const auto bundle = design_or_load(config, bundle_json);
        const auto report =
            smpc::monte_carlo(smpc::experiment_from(config, bundle));
        return smpc::report_to_json(report);
      },
      py::arg("config_json"), py::arg("bundle_json") = std::string(),
      py::call_guard<py::gil_scoped_release>(),
      "Monte-Carlo rollout of every controller on shared disturbance draws; "
      "designs in-process unless a design bundle is supplied.  Returns the "
      "report as JSON.");

  m.def(
      "sweep_json",
      [](const std::string& config_json) {
        const auto config = smpc::parse_config(config_json);
        return smpc::sweep_report_to_json(smpc::sweep_m(smpc::sweep_from(config)));
      },
      py::arg("config_json"), py::call_guard<py::gil_scoped_release>(),
      "Design and simulate one periodic-reset controller per period in the "
      "config's sweep section; returns the sweep report as JSON.");

  m.def(
      "tightening_levels",
      [](const std::string& config_json, Eigen::Index period,
         Eigen::Index steps) {
        const auto config = smpc::parse_config(config_json);
        const auto table = smpc::tightening_table(config, period, steps);
        py::dict out;
        out["period"] = table.period;
        out["gamma_max"] = table.gamma_max;
        out["gamma"] = table.gamma;
        out["beta"] = table.beta;
        out["beta_tilde"] = table.beta_tilde;
        return out;
      },
      py::arg("config_json"), py::arg("period"), py::arg("steps"),
      "Per-row tightening levels of the closed loop under the first "
      "controller's gain: the per-step levels, their saturation bound, the "
      "never-reset accumulation and the period-`period` accumulation "
      "(empty when period == 0).  Arrays are rows x steps.");

  m.def(
      "discard_count",
      [](double probability, long num_samples, double delta) {
        return smpc::discard_count(probability, num_samples, delta);
      },
      py::arg("probability"), py::arg("num_samples"), py::arg("delta"),
      "Number of scenario samples that may be discarded while keeping the "
      "chance-constraint guarantee at `probability` with confidence "
      "1 - delta.");

  m.def(
      "lqr_gain",
      [](const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
         const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
        smpc::LinearStochasticSystem sys;
        sys.A = A;
        sys.B = B;
        sys.D = Eigen::MatrixXd::Identity(A.rows(), A.rows());
        smpc::CostSpec cost;
        cost.Q = Q;
        cost.R = R;
        cost.q = Eigen::VectorXd::Zero(A.rows());
        cost.r = Eigen::VectorXd::Zero(B.cols());
        return smpc::lqr_gain(sys, cost);
      },
      py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"),
      "Infinite-horizon LQR gain K (u = K x) with A + BK Schur stable.");
}
