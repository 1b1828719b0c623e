#include "smpc/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "smpc/errors.hpp"
#include "smpc/system.hpp"

namespace smpc {

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";
constexpr int kBundleVersion = 1;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed)
      if (it.key() == key) {
        known = true;
        break;
      }
    if (!known) fail(where, "unknown key '" + it.key() + "'");
  }
}

const json& require(const json& obj, const std::string& where,
                    const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end())
    fail(where, std::string("missing required key '") + key + "'");
  return *it;
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

long as_integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  return v.get<long>();
}

bool as_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) fail(where, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) fail(where, "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd as_vector(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where, "expected an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) =
        as_number(v[i], where + "[" + std::to_string(i) + "]");
  return out;
}

Eigen::MatrixXd as_matrix(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where, "expected an array of rows");
  if (v.empty()) return Eigen::MatrixXd(0, 0);
  const Eigen::Index rows = static_cast<Eigen::Index>(v.size());
  Eigen::Index cols = -1;
  Eigen::MatrixXd out;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd row =
        as_vector(v[static_cast<size_t>(i)],
                  where + "[" + std::to_string(i) + "]");
    if (cols < 0) {
      cols = row.size();
      out.resize(rows, cols);
    } else if (row.size() != cols) {
      fail(where, "rows have inconsistent lengths");
    }
    out.row(i) = row.transpose();
  }
  return out;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out.push_back(vector_to_json(m.row(i).transpose()));
  return out;
}

ProfileKind profile_from_name(const std::string& name,
                              const std::string& where) {
  if (name == "gamma") return ProfileKind::Gamma;
  if (name == "a") return ProfileKind::A;
  if (name == "beta") return ProfileKind::Beta;
  if (name == "beta_tilde") return ProfileKind::BetaTilde;
  fail(where, "unknown profile '" + name +
                  "' (expected gamma, a, beta, or beta_tilde)");
}

/// "M" style reset period: a positive integer or "inf" (never reset).
Eigen::Index as_period(const json& v, const std::string& where) {
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return 0;
    fail(where, "expected a positive integer or \"inf\"");
  }
  const long value = as_integer(v, where);
  if (value < 1) fail(where, "reset period must be positive (or \"inf\")");
  return value;
}

json period_to_json(Eigen::Index period) {
  if (period == 0) return json("inf");
  return json(static_cast<long>(period));
}

GainSpec parse_gain(const json& v, const std::string& where) {
  GainSpec spec;
  expect_keys(v, where,
              {"type", "K", "profile", "period", "target", "q11_lo", "q11_hi"});
  const std::string type = as_string(require(v, where, "type"), where);
  if (type == "lqr") {
    expect_keys(v, where, {"type"});
    spec.kind = GainSpec::Kind::Lqr;
  } else if (type == "given") {
    expect_keys(v, where, {"type", "K"});
    spec.kind = GainSpec::Kind::Given;
    spec.K = as_matrix(require(v, where, "K"), where + ".K");
  } else if (type == "tuned") {
    expect_keys(v, where,
                {"type", "profile", "period", "target", "q11_lo", "q11_hi"});
    spec.kind = GainSpec::Kind::Tuned;
    if (v.contains("profile")) {
      spec.profile = profile_from_name(
          as_string(v["profile"], where + ".profile"), where + ".profile");
      spec.profile_explicit = true;
      if (spec.profile == ProfileKind::BetaTilde)
        spec.period = as_period(require(v, where, "period"), where + ".period");
      else if (v.contains("period"))
        fail(where, "'period' applies only to profile \"beta_tilde\"");
    } else if (v.contains("period")) {
      fail(where, "'period' requires an explicit 'profile'");
    }
    if (v.contains("target"))
      spec.target = as_number(v["target"], where + ".target");
    if (v.contains("q11_lo"))
      spec.q11_lo = as_number(v["q11_lo"], where + ".q11_lo");
    if (v.contains("q11_hi"))
      spec.q11_hi = as_number(v["q11_hi"], where + ".q11_hi");
    if (!(spec.target > 0.0 && spec.target < 1.0))
      fail(where, "tuning target must lie in (0, 1)");
    if (!(spec.q11_lo > 0.0 && spec.q11_hi > spec.q11_lo))
      fail(where, "tuning bracket must satisfy 0 < q11_lo < q11_hi");
  } else {
    fail(where, "unknown gain type '" + type +
                    "' (expected lqr, given, or tuned)");
  }
  return spec;
}

json gain_to_json(const GainSpec& spec) {
  json out;
  switch (spec.kind) {
    case GainSpec::Kind::Lqr:
      out["type"] = "lqr";
      break;
    case GainSpec::Kind::Given:
      out["type"] = "given";
      out["K"] = matrix_to_json(spec.K);
      break;
    case GainSpec::Kind::Tuned:
      out["type"] = "tuned";
      if (spec.profile_explicit) {
        out["profile"] = profile_kind_name(spec.profile);
        if (spec.profile == ProfileKind::BetaTilde)
          out["period"] = static_cast<long>(spec.period);
      }
      out["target"] = spec.target;
      out["q11_lo"] = spec.q11_lo;
      out["q11_hi"] = spec.q11_hi;
      break;
  }
  return out;
}

ControllerEntry parse_controller(const json& v, const std::string& where) {
  ControllerEntry entry;
  expect_keys(v, where,
              {"label", "kind", "N", "M", "remark4_input_handling", "gain"});
  const std::string kind_name =
      as_string(require(v, where, "kind"), where + ".kind");
  try {
    entry.kind = controller_kind_from_name(kind_name);
  } catch (const ConfigError&) {
    fail(where + ".kind", "unknown controller kind '" + kind_name + "'");
  }
  if (entry.kind == ControllerKind::Feedback) {
    if (v.contains("N") || v.contains("M"))
      fail(where, "a feedback entry takes neither 'N' nor 'M'");
    entry.horizon = 1;
  } else {
    const long horizon = as_integer(require(v, where, "N"), where + ".N");
    if (horizon < 1) fail(where + ".N", "horizon must be positive");
    entry.horizon = horizon;
    if (entry.kind == ControllerKind::MultiStep) {
      entry.period = as_period(require(v, where, "M"), where + ".M");
    } else if (v.contains("M")) {
      fail(where, "'M' applies only to kind \"ms\"");
    }
  }
  if (v.contains("remark4_input_handling"))
    entry.exact_first_input =
        as_bool(v["remark4_input_handling"], where + ".remark4_input_handling");
  if (v.contains("gain")) entry.gain = parse_gain(v["gain"], where + ".gain");
  entry.label = v.contains("label")
                    ? as_string(v["label"], where + ".label")
                    : std::string(controller_kind_name(entry.kind));
  if (entry.label.empty()) fail(where + ".label", "label must be nonempty");
  return entry;
}

json controller_to_json(const ControllerEntry& entry) {
  json out;
  out["label"] = entry.label;
  out["kind"] = controller_kind_name(entry.kind);
  if (entry.kind != ControllerKind::Feedback) {
    out["N"] = static_cast<long>(entry.horizon);
    if (entry.kind == ControllerKind::MultiStep)
      out["M"] = period_to_json(entry.period);
  }
  out["remark4_input_handling"] = entry.exact_first_input;
  out["gain"] = gain_to_json(entry.gain);
  return out;
}

DisturbanceModel parse_disturbance(const json& v, const std::string& where,
                                   Eigen::Index expect_dim) {
  DisturbanceModel model;
  expect_keys(v, where, {"kind", "lower", "upper", "covariance"});
  const std::string kind = as_string(require(v, where, "kind"), where);
  if (kind == "uniform_box") {
    model.kind = DisturbanceKind::UniformBox;
  } else if (kind == "truncated_gaussian") {
    model.kind = DisturbanceKind::TruncatedGaussian;
  } else {
    fail(where + ".kind", "unknown disturbance kind '" + kind + "'");
  }
  model.box.lower = as_vector(require(v, where, "lower"), where + ".lower");
  model.box.upper = as_vector(require(v, where, "upper"), where + ".upper");
  if (model.box.lower.size() != model.box.upper.size())
    fail(where, "lower and upper must have the same length");
  if (model.box.lower.size() != expect_dim)
    fail(where, "support dimension does not match the columns of D");
  for (Eigen::Index i = 0; i < model.box.lower.size(); ++i)
    if (model.box.lower(i) > 0.0 || model.box.upper(i) < 0.0)
      fail(where, "support must contain the origin");
  if (v.contains("covariance")) {
    model.covariance = as_matrix(v["covariance"], where + ".covariance");
    if (model.covariance.rows() != expect_dim ||
        model.covariance.cols() != expect_dim)
      fail(where + ".covariance", "must be square with the support dimension");
  } else if (model.kind == DisturbanceKind::UniformBox) {
    // Exact second moment of independent uniform coordinates.
    model.covariance = Eigen::MatrixXd::Zero(expect_dim, expect_dim);
    for (Eigen::Index i = 0; i < expect_dim; ++i) {
      const double width = model.box.upper(i) - model.box.lower(i);
      model.covariance(i, i) = width * width / 12.0;
    }
  } else {
    fail(where, "truncated_gaussian requires an explicit covariance");
  }
  return model;
}

json disturbance_to_json(const DisturbanceModel& model) {
  json out;
  out["kind"] = model.kind == DisturbanceKind::UniformBox
                    ? "uniform_box"
                    : "truncated_gaussian";
  out["lower"] = vector_to_json(model.box.lower);
  out["upper"] = vector_to_json(model.box.upper);
  out["covariance"] = matrix_to_json(model.covariance);
  return out;
}

MixedConstraints parse_constraints(const json& v, const std::string& where,
                                   Eigen::Index state_dim,
                                   Eigen::Index input_dim) {
  expect_keys(v, where, {"state_rows", "input_rows"});
  std::vector<RawConstraintRow> state_rows, input_rows;
  const json& sr = require(v, where, "state_rows");
  if (!sr.is_array()) fail(where + ".state_rows", "expected an array");
  for (size_t i = 0; i < sr.size(); ++i) {
    const std::string label =
        where + ".state_rows[" + std::to_string(i) + "]";
    expect_keys(sr[i], label, {"row", "rhs", "probability"});
    RawConstraintRow row;
    row.row = as_vector(require(sr[i], label, "row"), label + ".row");
    if (row.row.size() != state_dim)
      fail(label + ".row", "length must equal the state dimension");
    if (sr[i].contains("rhs"))
      row.rhs = as_number(sr[i]["rhs"], label + ".rhs");
    if (sr[i].contains("probability")) {
      row.probability = as_number(sr[i]["probability"], label);
      if (!(row.probability > 0.0 && row.probability <= 1.0))
        fail(label + ".probability", "must lie in (0, 1]");
    }
    state_rows.push_back(std::move(row));
  }
  const json& ir = require(v, where, "input_rows");
  if (!ir.is_array()) fail(where + ".input_rows", "expected an array");
  for (size_t i = 0; i < ir.size(); ++i) {
    const std::string label =
        where + ".input_rows[" + std::to_string(i) + "]";
    expect_keys(ir[i], label, {"row", "rhs"});
    RawConstraintRow row;
    row.row = as_vector(require(ir[i], label, "row"), label + ".row");
    if (row.row.size() != input_dim)
      fail(label + ".row", "length must equal the input dimension");
    if (ir[i].contains("rhs"))
      row.rhs = as_number(ir[i]["rhs"], label + ".rhs");
    input_rows.push_back(std::move(row));
  }
  return assemble_mixed_constraints(state_rows, static_cast<int>(state_dim),
                                    input_rows, static_cast<int>(input_dim));
}

json constraints_to_json(const MixedConstraints& con) {
  // Rows were normalized to unit right-hand side at assembly; emit them as-is.
  json state_rows = json::array();
  for (Eigen::Index j = 0; j < con.num_state_rows; ++j) {
    json row;
    row["row"] = vector_to_json(con.F.row(j).transpose());
    row["rhs"] = 1.0;
    row["probability"] = con.probability(j);
    state_rows.push_back(std::move(row));
  }
  json input_rows = json::array();
  for (Eigen::Index j = con.num_state_rows; j < con.rows(); ++j) {
    json row;
    row["row"] = vector_to_json(con.G.row(j).transpose());
    row["rhs"] = 1.0;
    input_rows.push_back(std::move(row));
  }
  json out;
  out["state_rows"] = std::move(state_rows);
  out["input_rows"] = std::move(input_rows);
  return out;
}

CostSpec parse_cost(const json& v, const std::string& where,
                    Eigen::Index state_dim, Eigen::Index input_dim) {
  CostSpec cost;
  expect_keys(v, where, {"Q", "R", "q", "r", "constant"});
  cost.Q = as_matrix(require(v, where, "Q"), where + ".Q");
  cost.R = as_matrix(require(v, where, "R"), where + ".R");
  cost.q = v.contains("q") ? as_vector(v["q"], where + ".q")
                           : Eigen::VectorXd::Zero(state_dim);
  cost.r = v.contains("r") ? as_vector(v["r"], where + ".r")
                           : Eigen::VectorXd::Zero(input_dim);
  if (v.contains("constant"))
    cost.constant = as_number(v["constant"], where + ".constant");
  if (cost.Q.rows() != state_dim || cost.Q.cols() != state_dim)
    fail(where + ".Q", "must be state_dim x state_dim");
  if (cost.R.rows() != input_dim || cost.R.cols() != input_dim)
    fail(where + ".R", "must be input_dim x input_dim");
  if (cost.q.size() != state_dim) fail(where + ".q", "wrong length");
  if (cost.r.size() != input_dim) fail(where + ".r", "wrong length");
  return cost;
}

json cost_to_json(const CostSpec& cost) {
  json out;
  out["Q"] = matrix_to_json(cost.Q);
  out["R"] = matrix_to_json(cost.R);
  out["q"] = vector_to_json(cost.q);
  out["r"] = vector_to_json(cost.r);
  out["constant"] = cost.constant;
  return out;
}

json scenario_to_json(const ScenarioConfig& scen, Eigen::Index k_bar) {
  json out;
  out["N_s"] = scen.num_samples;
  out["delta"] = scen.confidence;
  out["k_bar"] = static_cast<long>(k_bar);
  out["seed"] = scen.rng_seed;
  out["jobs"] = scen.jobs;
  return out;
}

json profile_to_json(const TighteningProfile& profile) {
  json out;
  out["kind"] = profile_kind_name(profile.kind);
  out["prefix"] = matrix_to_json(profile.prefix);
  out["saturation"] = vector_to_json(profile.saturation);
  return out;
}

TighteningProfile profile_from_json(const json& v, const std::string& where) {
  TighteningProfile profile;
  expect_keys(v, where, {"kind", "prefix", "saturation"});
  profile.kind =
      profile_from_name(as_string(require(v, where, "kind"), where), where);
  profile.prefix = as_matrix(require(v, where, "prefix"), where + ".prefix");
  profile.saturation =
      as_vector(require(v, where, "saturation"), where + ".saturation");
  return profile;
}

json polytope_to_json(const Polytope& set) {
  json out;
  out["H"] = matrix_to_json(set.H);
  out["b"] = vector_to_json(set.b);
  out["empty"] = set.empty;
  out["determination_index"] = set.determination_index;
  return out;
}

Polytope polytope_from_json(const json& v, const std::string& where) {
  Polytope set;
  expect_keys(v, where, {"H", "b", "empty", "determination_index"});
  set.H = as_matrix(require(v, where, "H"), where + ".H");
  set.b = as_vector(require(v, where, "b"), where + ".b");
  set.empty = as_bool(require(v, where, "empty"), where + ".empty");
  set.determination_index = static_cast<int>(
      as_integer(require(v, where, "determination_index"), where));
  return set;
}

json design_to_json(const ControllerDesign& d) {
  json out;
  out["kind"] = controller_kind_name(d.kind);
  out["horizon"] = static_cast<long>(d.horizon);
  out["period"] = static_cast<long>(d.period);
  out["exact_first_input"] = d.exact_first_input;
  out["k_bar"] = static_cast<long>(d.k_bar);
  out["system"] = {{"A", matrix_to_json(d.sys.A)},
                   {"B", matrix_to_json(d.sys.B)},
                   {"D", matrix_to_json(d.sys.D)}};
  out["constraints"] = {{"F", matrix_to_json(d.constraints.F)},
                        {"G", matrix_to_json(d.constraints.G)},
                        {"probability",
                         vector_to_json(d.constraints.probability)},
                        {"num_state_rows",
                         static_cast<long>(d.constraints.num_state_rows)}};
  out["cost"] = cost_to_json(d.cost);
  out["disturbance"] = disturbance_to_json(d.disturbance);
  out["scenario"] = {{"num_samples", d.scenario.num_samples},
                     {"confidence", d.scenario.confidence},
                     {"rng_seed", d.scenario.rng_seed},
                     {"jobs", d.scenario.jobs}};
  out["loop"] = {{"K", matrix_to_json(d.loop.K)},
                 {"Phi", matrix_to_json(d.loop.Phi)},
                 {"F_tilde", matrix_to_json(d.loop.F_tilde)},
                 {"probabilities", vector_to_json(d.loop.probabilities)}};
  out["terminal"] = {{"P", matrix_to_json(d.terminal.P)},
                     {"p", vector_to_json(d.terminal.p)}};
  out["tail"] = {{"coefficient", vector_to_json(d.tail.coefficient)},
                 {"rate", d.tail.rate},
                 {"nilpotent_index", d.tail.nilpotent_index}};
  out["gamma"] = profile_to_json(d.gamma);
  out["one_step"] = profile_to_json(d.one_step);
  out["beta"] = profile_to_json(d.beta);
  out["beta_tilde"] = profile_to_json(d.beta_tilde);
  out["terminal_set"] = polytope_to_json(d.terminal_set);
  json phases = json::array();
  for (const Polytope& set : d.terminal_set_by_phase)
    phases.push_back(polytope_to_json(set));
  out["terminal_set_by_phase"] = std::move(phases);
  out["secondary_terminal_set"] = polytope_to_json(d.secondary_terminal_set);
  out["use_secondary_terminal"] = d.use_secondary_terminal;
  return out;
}

ControllerDesign design_from_json(const json& v, const std::string& where) {
  ControllerDesign d;
  expect_keys(v, where,
              {"kind", "horizon", "period", "exact_first_input", "k_bar",
               "system", "constraints", "cost", "disturbance", "scenario",
               "loop", "terminal", "tail", "gamma", "one_step", "beta",
               "beta_tilde", "terminal_set", "terminal_set_by_phase",
               "secondary_terminal_set", "use_secondary_terminal"});
  d.kind = controller_kind_from_name(
      as_string(require(v, where, "kind"), where + ".kind"));
  d.horizon = as_integer(require(v, where, "horizon"), where + ".horizon");
  d.period = as_integer(require(v, where, "period"), where + ".period");
  d.exact_first_input =
      as_bool(require(v, where, "exact_first_input"), where);
  d.k_bar = as_integer(require(v, where, "k_bar"), where + ".k_bar");

  const json& sys = require(v, where, "system");
  expect_keys(sys, where + ".system", {"A", "B", "D"});
  d.sys.A = as_matrix(require(sys, where, "A"), where + ".system.A");
  d.sys.B = as_matrix(require(sys, where, "B"), where + ".system.B");
  d.sys.D = as_matrix(require(sys, where, "D"), where + ".system.D");

  const json& con = require(v, where, "constraints");
  expect_keys(con, where + ".constraints",
              {"F", "G", "probability", "num_state_rows"});
  d.constraints.F = as_matrix(require(con, where, "F"), where + ".F");
  d.constraints.G = as_matrix(require(con, where, "G"), where + ".G");
  d.constraints.probability =
      as_vector(require(con, where, "probability"), where + ".probability");
  d.constraints.num_state_rows = static_cast<int>(
      as_integer(require(con, where, "num_state_rows"), where));

  const json& cost = require(v, where, "cost");
  expect_keys(cost, where + ".cost", {"Q", "R", "q", "r", "constant"});
  d.cost.Q = as_matrix(require(cost, where, "Q"), where + ".cost.Q");
  d.cost.R = as_matrix(require(cost, where, "R"), where + ".cost.R");
  d.cost.q = as_vector(require(cost, where, "q"), where + ".cost.q");
  d.cost.r = as_vector(require(cost, where, "r"), where + ".cost.r");
  d.cost.constant =
      as_number(require(cost, where, "constant"), where + ".cost.constant");

  const json& dist = require(v, where, "disturbance");
  expect_keys(dist, where + ".disturbance",
              {"kind", "lower", "upper", "covariance"});
  const std::string dist_kind =
      as_string(require(dist, where, "kind"), where);
  if (dist_kind == "uniform_box") {
    d.disturbance.kind = DisturbanceKind::UniformBox;
  } else if (dist_kind == "truncated_gaussian") {
    d.disturbance.kind = DisturbanceKind::TruncatedGaussian;
  } else {
    fail(where + ".disturbance.kind", "unknown kind '" + dist_kind + "'");
  }
  d.disturbance.box.lower =
      as_vector(require(dist, where, "lower"), where + ".lower");
  d.disturbance.box.upper =
      as_vector(require(dist, where, "upper"), where + ".upper");
  d.disturbance.covariance =
      as_matrix(require(dist, where, "covariance"), where + ".covariance");

  const json& scen = require(v, where, "scenario");
  expect_keys(scen, where + ".scenario",
              {"num_samples", "confidence", "rng_seed", "jobs"});
  d.scenario.num_samples =
      as_integer(require(scen, where, "num_samples"), where);
  d.scenario.confidence =
      as_number(require(scen, where, "confidence"), where);
  if (!require(scen, where, "rng_seed").is_number_unsigned() &&
      !require(scen, where, "rng_seed").is_number_integer())
    fail(where + ".scenario.rng_seed", "expected an integer");
  d.scenario.rng_seed = scen["rng_seed"].get<std::uint64_t>();
  d.scenario.jobs =
      static_cast<int>(as_integer(require(scen, where, "jobs"), where));

  const json& loop = require(v, where, "loop");
  expect_keys(loop, where + ".loop", {"K", "Phi", "F_tilde", "probabilities"});
  d.loop.K = as_matrix(require(loop, where, "K"), where + ".loop.K");
  d.loop.Phi = as_matrix(require(loop, where, "Phi"), where + ".loop.Phi");
  d.loop.F_tilde =
      as_matrix(require(loop, where, "F_tilde"), where + ".loop.F_tilde");
  d.loop.probabilities = as_vector(require(loop, where, "probabilities"),
                                   where + ".loop.probabilities");

  const json& term = require(v, where, "terminal");
  expect_keys(term, where + ".terminal", {"P", "p"});
  d.terminal.P = as_matrix(require(term, where, "P"), where + ".terminal.P");
  d.terminal.p = as_vector(require(term, where, "p"), where + ".terminal.p");

  const json& tail = require(v, where, "tail");
  expect_keys(tail, where + ".tail",
              {"coefficient", "rate", "nilpotent_index"});
  d.tail.coefficient = as_vector(require(tail, where, "coefficient"),
                                 where + ".tail.coefficient");
  d.tail.rate = as_number(require(tail, where, "rate"), where + ".tail.rate");
  d.tail.nilpotent_index = static_cast<int>(
      as_integer(require(tail, where, "nilpotent_index"), where));

  d.gamma = profile_from_json(require(v, where, "gamma"), where + ".gamma");
  d.one_step =
      profile_from_json(require(v, where, "one_step"), where + ".one_step");
  d.beta = profile_from_json(require(v, where, "beta"), where + ".beta");
  d.beta_tilde = profile_from_json(require(v, where, "beta_tilde"),
                                   where + ".beta_tilde");
  d.terminal_set = polytope_from_json(require(v, where, "terminal_set"),
                                      where + ".terminal_set");
  const json& phases = require(v, where, "terminal_set_by_phase");
  if (!phases.is_array())
    fail(where + ".terminal_set_by_phase", "expected an array");
  for (size_t i = 0; i < phases.size(); ++i)
    d.terminal_set_by_phase.push_back(polytope_from_json(
        phases[i],
        where + ".terminal_set_by_phase[" + std::to_string(i) + "]"));
  d.secondary_terminal_set =
      polytope_from_json(require(v, where, "secondary_terminal_set"),
                         where + ".secondary_terminal_set");
  d.use_secondary_terminal =
      as_bool(require(v, where, "use_secondary_terminal"), where);
  return d;
}

/// Defaults for a tuned gain whose entry does not pin the profile: the
/// accumulation the owning controller must keep feasible.
void tuned_defaults(const ControllerEntry& entry, ProfileKind* profile,
                    Eigen::Index* period) {
  switch (entry.kind) {
    case ControllerKind::Robust:
      *profile = ProfileKind::Beta;
      *period = 1;
      return;
    case ControllerKind::MultiStep:
      if (entry.period > 0) {
        *profile = ProfileKind::BetaTilde;
        *period = entry.period;
        return;
      }
      [[fallthrough]];
    case ControllerKind::Naive:
    case ControllerKind::Indirect:
      *profile = ProfileKind::Gamma;
      *period = 0;
      return;
    case ControllerKind::Feedback:
      throw ConfigError(
          "a tuned gain on a feedback entry needs an explicit 'profile' "
          "(and 'period' for beta_tilde)");
  }
  throw ConfigError("unknown controller kind");
}

std::string tuned_key(ProfileKind profile, Eigen::Index period,
                      const GainSpec& spec) {
  std::ostringstream key;
  key.precision(17);
  key << profile_kind_name(profile) << '/' << period << '/' << spec.target
      << '/' << spec.q11_lo << '/' << spec.q11_hi;
  return key.str();
}

Eigen::MatrixXd resolve_gain(const ProjectConfig& config, const GainSpec& spec,
                             ProfileKind default_profile,
                             Eigen::Index default_period,
                             std::map<std::string, Eigen::MatrixXd>* memo) {
  switch (spec.kind) {
    case GainSpec::Kind::Lqr:
      return lqr_gain(config.sys, config.cost);
    case GainSpec::Kind::Given: {
      const Eigen::Index n = config.sys.A.rows();
      const Eigen::Index m = config.sys.B.cols();
      if (spec.K.rows() != m || spec.K.cols() != n)
        throw ConfigError("given gain must be input_dim x state_dim");
      return spec.K;
    }
    case GainSpec::Kind::Tuned: {
      const ProfileKind profile =
          spec.profile_explicit ? spec.profile : default_profile;
      const Eigen::Index period =
          spec.profile_explicit ? spec.period : default_period;
      const std::string key = tuned_key(profile, period, spec);
      if (memo != nullptr) {
        const auto hit = memo->find(key);
        if (hit != memo->end()) return hit->second;
      }
      const TubeGainResult result = tune_tube_gain(
          config.sys, config.constraints, config.cost, config.disturbance,
          profile, period, spec.target, spec.q11_lo, spec.q11_hi,
          config.scenario);
      if (memo != nullptr) (*memo)[key] = result.K;
      return result.K;
    }
  }
  throw ConfigError("unknown gain type");
}

std::string csv_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

ProjectConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  expect_keys(doc, "config",
              {"system", "disturbance", "constraints", "cost", "controller",
               "controllers", "tightening", "experiment", "sweep", "output"});

  ProjectConfig config;
  const json& sys = require(doc, "config", "system");
  expect_keys(sys, "system", {"A", "B", "D"});
  config.sys.A = as_matrix(require(sys, "system", "A"), "system.A");
  config.sys.B = as_matrix(require(sys, "system", "B"), "system.B");
  config.sys.D = as_matrix(require(sys, "system", "D"), "system.D");
  const Eigen::Index n = config.sys.A.rows();
  const Eigen::Index m = config.sys.B.cols();
  if (config.sys.A.cols() != n) fail("system.A", "must be square");
  if (config.sys.B.rows() != n) fail("system.B", "row count must match A");
  if (config.sys.D.rows() != n) fail("system.D", "row count must match A");

  config.disturbance = parse_disturbance(
      require(doc, "config", "disturbance"), "disturbance",
      config.sys.D.cols());
  config.constraints = parse_constraints(require(doc, "config", "constraints"),
                                         "constraints", n, m);
  config.cost = parse_cost(require(doc, "config", "cost"), "cost", n, m);

  if (doc.contains("controller") && doc.contains("controllers"))
    fail("config", "give either 'controller' or 'controllers', not both");
  if (doc.contains("controller")) {
    config.controllers.push_back(
        parse_controller(doc["controller"], "controller"));
  } else if (doc.contains("controllers")) {
    const json& list = doc["controllers"];
    if (!list.is_array() || list.empty())
      fail("controllers", "expected a nonempty array");
    for (size_t i = 0; i < list.size(); ++i)
      config.controllers.push_back(parse_controller(
          list[i], "controllers[" + std::to_string(i) + "]"));
  } else if (!doc.contains("sweep")) {
    fail("config", "missing 'controller', 'controllers', or 'sweep'");
  }
  for (size_t i = 0; i < config.controllers.size(); ++i)
    for (size_t l = i + 1; l < config.controllers.size(); ++l)
      if (config.controllers[i].label == config.controllers[l].label)
        fail("controllers",
             "duplicate label '" + config.controllers[i].label + "'");

  if (doc.contains("tightening")) {
    const json& t = doc["tightening"];
    expect_keys(t, "tightening", {"N_s", "delta", "k_bar", "seed", "jobs"});
    if (t.contains("N_s")) {
      config.scenario.num_samples = as_integer(t["N_s"], "tightening.N_s");
      if (config.scenario.num_samples < 2)
        fail("tightening.N_s", "needs at least two samples");
    }
    if (t.contains("delta")) {
      config.scenario.confidence = as_number(t["delta"], "tightening.delta");
      if (!(config.scenario.confidence > 0.0 &&
            config.scenario.confidence < 1.0))
        fail("tightening.delta", "must lie in (0, 1)");
    }
    if (t.contains("k_bar")) {
      config.k_bar = as_integer(t["k_bar"], "tightening.k_bar");
      if (config.k_bar < 0) fail("tightening.k_bar", "must be nonnegative");
    }
    if (t.contains("seed"))
      config.scenario.rng_seed = t["seed"].get<std::uint64_t>();
    if (t.contains("jobs")) {
      config.scenario.jobs =
          static_cast<int>(as_integer(t["jobs"], "tightening.jobs"));
      if (config.scenario.jobs < 1) fail("tightening.jobs", "must be >= 1");
    }
  }

  if (doc.contains("experiment")) {
    const json& e = doc["experiment"];
    expect_keys(e, "experiment",
                {"T", "realizations", "window", "seed", "x0", "jobs",
                 "check_candidates", "reference"});
    if (e.contains("T"))
      config.experiment.sim_length = as_integer(e["T"], "experiment.T");
    if (e.contains("realizations"))
      config.experiment.num_realizations =
          as_integer(e["realizations"], "experiment.realizations");
    if (e.contains("window")) {
      const json& w = e["window"];
      if (!w.is_array() || w.size() != 2)
        fail("experiment.window", "expected [first, last]");
      config.experiment.window_lo = as_integer(w[0], "experiment.window[0]");
      config.experiment.window_hi = as_integer(w[1], "experiment.window[1]");
    }
    if (e.contains("seed"))
      config.experiment.seed = e["seed"].get<std::uint64_t>();
    if (e.contains("x0")) {
      config.experiment.x0 = as_vector(e["x0"], "experiment.x0");
      if (config.experiment.x0.size() != n)
        fail("experiment.x0", "length must equal the state dimension");
    }
    if (e.contains("jobs")) {
      config.experiment.jobs =
          static_cast<int>(as_integer(e["jobs"], "experiment.jobs"));
      if (config.experiment.jobs < 1) fail("experiment.jobs", "must be >= 1");
    }
    if (e.contains("check_candidates"))
      config.experiment.check_candidates =
          as_bool(e["check_candidates"], "experiment.check_candidates");
    if (e.contains("reference")) {
      config.reference = parse_gain(e["reference"], "experiment.reference");
      config.has_reference = true;
    }
    if (config.experiment.sim_length < 1)
      fail("experiment.T", "must be positive");
    if (config.experiment.num_realizations < 1)
      fail("experiment.realizations", "must be positive");
    if (config.experiment.window_lo < 0 ||
        config.experiment.window_hi < config.experiment.window_lo ||
        config.experiment.window_hi >= config.experiment.sim_length)
      fail("experiment.window", "must be nonempty and end before T");
  }

  if (doc.contains("sweep")) {
    const json& s = doc["sweep"];
    expect_keys(s, "sweep", {"N", "periods", "remark4_input_handling", "gain"});
    config.sweep.present = true;
    config.sweep.horizon = as_integer(require(s, "sweep", "N"), "sweep.N");
    if (config.sweep.horizon < 1) fail("sweep.N", "must be positive");
    const json& periods = require(s, "sweep", "periods");
    if (!periods.is_array() || periods.empty())
      fail("sweep.periods", "expected a nonempty array");
    for (size_t i = 0; i < periods.size(); ++i)
      config.sweep.periods.push_back(as_period(
          periods[i], "sweep.periods[" + std::to_string(i) + "]"));
    if (s.contains("remark4_input_handling"))
      config.sweep.exact_first_input =
          as_bool(s["remark4_input_handling"], "sweep.remark4_input_handling");
    if (s.contains("gain")) {
      config.sweep.gain = parse_gain(s["gain"], "sweep.gain");
    } else {
      config.sweep.gain.kind = GainSpec::Kind::Tuned;
    }
  }

  if (doc.contains("output")) {
    const json& o = doc["output"];
    expect_keys(o, "output", {"dir", "formats"});
    if (o.contains("dir")) {
      config.output.dir = as_string(o["dir"], "output.dir");
      if (config.output.dir.empty()) fail("output.dir", "must be nonempty");
    }
    if (o.contains("formats")) {
      const json& formats = o["formats"];
      if (!formats.is_array() || formats.empty())
        fail("output.formats", "expected a nonempty array");
      config.output.formats.clear();
      for (size_t i = 0; i < formats.size(); ++i) {
        const std::string f = as_string(
            formats[i], "output.formats[" + std::to_string(i) + "]");
        if (f != "json" && f != "csv" && f != "svg")
          fail("output.formats", "unknown format '" + f +
                                     "' (expected json, csv, or svg)");
        config.output.formats.push_back(f);
      }
    }
  }
  return config;
}

ProjectConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string config_to_json(const ProjectConfig& config) {
  json doc;
  doc["system"] = {{"A", matrix_to_json(config.sys.A)},
                   {"B", matrix_to_json(config.sys.B)},
                   {"D", matrix_to_json(config.sys.D)}};
  doc["disturbance"] = disturbance_to_json(config.disturbance);
  doc["constraints"] = constraints_to_json(config.constraints);
  doc["cost"] = cost_to_json(config.cost);
  json controllers = json::array();
  for (const ControllerEntry& entry : config.controllers)
    controllers.push_back(controller_to_json(entry));
  doc["controllers"] = std::move(controllers);
  doc["tightening"] = scenario_to_json(config.scenario, config.k_bar);
  json experiment;
  experiment["T"] = static_cast<long>(config.experiment.sim_length);
  experiment["realizations"] =
      static_cast<long>(config.experiment.num_realizations);
  experiment["window"] = {static_cast<long>(config.experiment.window_lo),
                          static_cast<long>(config.experiment.window_hi)};
  experiment["seed"] = config.experiment.seed;
  if (config.experiment.x0.size() > 0)
    experiment["x0"] = vector_to_json(config.experiment.x0);
  experiment["jobs"] = config.experiment.jobs;
  experiment["check_candidates"] = config.experiment.check_candidates;
  if (config.has_reference)
    experiment["reference"] = gain_to_json(config.reference);
  doc["experiment"] = std::move(experiment);
  if (config.sweep.present) {
    json sweep;
    sweep["N"] = static_cast<long>(config.sweep.horizon);
    json periods = json::array();
    for (const Eigen::Index period : config.sweep.periods)
      periods.push_back(period_to_json(period));
    sweep["periods"] = std::move(periods);
    sweep["remark4_input_handling"] = config.sweep.exact_first_input;
    sweep["gain"] = gain_to_json(config.sweep.gain);
    doc["sweep"] = std::move(sweep);
  }
  doc["output"] = {{"dir", config.output.dir},
                   {"formats", config.output.formats}};
  return doc.dump(2) + "\n";
}

DesignBundle design_from_config(const ProjectConfig& config) {
  DesignBundle bundle;
  bundle.tool_version = kToolVersion;
  bundle.scenario_seed = config.scenario.rng_seed;
  bundle.scenario_samples = config.scenario.num_samples;

  std::map<std::string, Eigen::MatrixXd> memo;
  for (const ControllerEntry& entry : config.controllers) {
    ProfileKind profile = ProfileKind::Gamma;
    Eigen::Index period = 0;
    if (entry.gain.kind == GainSpec::Kind::Tuned &&
        !entry.gain.profile_explicit)
      tuned_defaults(entry, &profile, &period);
    ControllerRequest req;
    req.kind = entry.kind;
    req.horizon = entry.horizon;
    req.period = entry.period;
    req.exact_first_input = entry.exact_first_input;
    req.k_bar = config.k_bar;
    req.K = resolve_gain(config, entry.gain, profile, period, &memo);
    bundle.labels.push_back(entry.label);
    try {
      bundle.designs.push_back(design_controller(req, config.sys,
                                                 config.constraints,
                                                 config.cost,
                                                 config.disturbance,
                                                 config.scenario));
    } catch (const DesignError& e) {
      throw DesignError("controller '" + entry.label + "': " + e.what());
    }
  }
  if (config.has_reference)
    bundle.reference_gain = resolve_gain(config, config.reference,
                                         ProfileKind::Gamma, 0, &memo);
  return bundle;
}

std::string bundle_to_json(const DesignBundle& bundle) {
  json doc;
  doc["version"] = kBundleVersion;
  doc["tool"] = bundle.tool_version;
  doc["provenance"] = {{"scenario_seed", bundle.scenario_seed},
                       {"scenario_samples", bundle.scenario_samples}};
  doc["reference_gain"] = matrix_to_json(bundle.reference_gain);
  json controllers = json::array();
  for (size_t i = 0; i < bundle.designs.size(); ++i) {
    json entry = design_to_json(bundle.designs[i]);
    entry["label"] = bundle.labels[i];
    controllers.push_back(std::move(entry));
  }
  doc["controllers"] = std::move(controllers);
  return doc.dump(2) + "\n";
}

DesignBundle bundle_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("artifact is not valid JSON: ") + e.what());
  }
  expect_keys(doc, "artifact",
              {"version", "tool", "provenance", "reference_gain",
               "controllers"});
  const long version = as_integer(require(doc, "artifact", "version"),
                                  "artifact.version");
  if (version != kBundleVersion) {
    std::ostringstream msg;
    msg << "artifact version " << version << " is not supported (expected "
        << kBundleVersion << ")";
    throw ConfigError(msg.str());
  }
  DesignBundle bundle;
  bundle.tool_version =
      as_string(require(doc, "artifact", "tool"), "artifact.tool");
  const json& prov = require(doc, "artifact", "provenance");
  expect_keys(prov, "artifact.provenance",
              {"scenario_seed", "scenario_samples"});
  bundle.scenario_seed =
      require(prov, "artifact.provenance", "scenario_seed")
          .get<std::uint64_t>();
  bundle.scenario_samples = as_integer(
      require(prov, "artifact.provenance", "scenario_samples"),
      "artifact.provenance.scenario_samples");
  bundle.reference_gain =
      as_matrix(require(doc, "artifact", "reference_gain"),
                "artifact.reference_gain");
  const json& controllers = require(doc, "artifact", "controllers");
  if (!controllers.is_array())
    fail("artifact.controllers", "expected an array");
  for (size_t i = 0; i < controllers.size(); ++i) {
    const std::string where =
        "artifact.controllers[" + std::to_string(i) + "]";
    json entry = controllers[i];
    bundle.labels.push_back(
        as_string(require(entry, where, "label"), where + ".label"));
    entry.erase("label");
    bundle.designs.push_back(design_from_json(entry, where));
  }
  return bundle;
}

DesignBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open artifact file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return bundle_from_json(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ExperimentConfig experiment_from(const ProjectConfig& config,
                                 const DesignBundle& bundle) {
  if (bundle.designs.empty())
    throw ConfigError("design bundle holds no controllers");
  ExperimentConfig experiment = config.experiment;
  experiment.controllers = bundle.designs;
  experiment.labels = bundle.labels;
  experiment.reference_gain = bundle.reference_gain;
  return experiment;
}

SweepConfig sweep_from(const ProjectConfig& config) {
  if (!config.sweep.present)
    throw ConfigError("config has no 'sweep' section");
  SweepConfig sweep;
  sweep.sys = config.sys;
  sweep.constraints = config.constraints;
  sweep.cost = config.cost;
  sweep.disturbance = config.disturbance;
  sweep.scenario = config.scenario;
  sweep.horizon = config.sweep.horizon;
  sweep.periods = config.sweep.periods;
  sweep.exact_first_input = config.sweep.exact_first_input;
  sweep.experiment = config.experiment;
  if (config.sweep.gain.kind == GainSpec::Kind::Tuned) {
    sweep.tune_target = config.sweep.gain.target;
    sweep.tune_lo = config.sweep.gain.q11_lo;
    sweep.tune_hi = config.sweep.gain.q11_hi;
  } else {
    sweep.fixed_gain = resolve_gain(config, config.sweep.gain,
                                    ProfileKind::Gamma, 0, nullptr);
  }
  if (config.has_reference)
    sweep.experiment.reference_gain = resolve_gain(
        config, config.reference, ProfileKind::Gamma, 0, nullptr);
  return sweep;
}

namespace {

json controller_report_to_json(const ControllerReport& r) {
  json out;
  out["label"] = r.label;
  out["avg_cost"] = r.avg_cost;
  out["normalized_cost"] = r.normalized_cost;
  out["violation_rate"] = vector_to_json(r.violation_rate);
  out["max_violation_rate"] = r.max_violation_rate;
  out["violations_per_step"] = vector_to_json(r.violations_per_step);
  out["feasibility_failures"] = static_cast<long>(r.feasibility_failures);
  out["candidate_failures"] = static_cast<long>(r.candidate_failures);
  out["dominance_failures"] = static_cast<long>(r.dominance_failures);
  out["input_violations"] = static_cast<long>(r.input_violations);
  out["performance_bound"] = r.performance_bound;
  out["cost_per_realization"] = vector_to_json(r.cost_per_realization);
  out["realizations_completed"] = static_cast<long>(r.realizations_completed);
  out["runtime_seconds"] = r.runtime_seconds;
  out["alarm"] = r.alarm;
  return out;
}

}  // namespace

std::string report_to_json(const SimulationReport& report) {
  json doc;
  doc["sim_length"] = static_cast<long>(report.sim_length);
  doc["num_realizations"] = static_cast<long>(report.num_realizations);
  doc["window"] = {static_cast<long>(report.window_lo),
                   static_cast<long>(report.window_hi)};
  doc["seed"] = report.seed;
  doc["reference_cost"] = report.reference_cost;
  json controllers = json::array();
  for (const ControllerReport& r : report.controllers)
    controllers.push_back(controller_report_to_json(r));
  doc["controllers"] = std::move(controllers);
  return doc.dump(2) + "\n";
}

std::string report_to_csv(const SimulationReport& report) {
  Eigen::Index rows = 0;
  for (const ControllerReport& r : report.controllers)
    rows = std::max(rows, r.violation_rate.size());
  std::ostringstream out;
  out << "label,avg_cost,normalized_cost,max_violation_rate,"
         "feasibility_failures,candidate_failures,dominance_failures,"
         "input_violations,performance_bound,realizations_completed";
  for (Eigen::Index j = 0; j < rows; ++j) out << ",violation_rate_" << j;
  out << "\n";
  for (const ControllerReport& r : report.controllers) {
    out << r.label << ',' << csv_number(r.avg_cost) << ','
        << csv_number(r.normalized_cost) << ','
        << csv_number(r.max_violation_rate) << ',' << r.feasibility_failures
        << ',' << r.candidate_failures << ',' << r.dominance_failures << ','
        << r.input_violations << ',' << csv_number(r.performance_bound) << ','
        << r.realizations_completed;
    for (Eigen::Index j = 0; j < rows; ++j) {
      out << ',';
      if (j < r.violation_rate.size()) out << csv_number(r.violation_rate(j));
    }
    out << "\n";
  }
  return out.str();
}

std::string realizations_to_csv(const SimulationReport& report) {
  std::ostringstream out;
  out << "label,realization,windowed_cost\n";
  for (const ControllerReport& r : report.controllers)
    for (Eigen::Index i = 0; i < r.cost_per_realization.size(); ++i)
      out << r.label << ',' << i << ','
          << csv_number(r.cost_per_realization(i)) << "\n";
  return out.str();
}

std::string violation_curve_to_csv(const SimulationReport& report) {
  std::ostringstream out;
  out << "label,step,violation_fraction\n";
  for (const ControllerReport& r : report.controllers)
    for (Eigen::Index k = 0; k < r.violations_per_step.size(); ++k)
      out << r.label << ',' << k << ','
          << csv_number(r.violations_per_step(k)) << "\n";
  return out.str();
}

std::string sweep_report_to_json(const SweepReport& report) {
  json doc;
  doc["reference_cost"] = report.reference_cost;
  json entries = json::array();
  for (const SweepEntry& e : report.entries) {
    json entry;
    entry["period"] = period_to_json(e.period);
    entry["designed"] = e.designed;
    entry["design_error"] = e.design_error;
    entry["K"] = matrix_to_json(e.K);
    entry["tuned_q11"] = e.tuned_q11;
    if (e.designed) entry["report"] = controller_report_to_json(e.report);
    entries.push_back(std::move(entry));
  }
  doc["entries"] = std::move(entries);
  return doc.dump(2) + "\n";
}

std::string sweep_report_to_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "period,designed,avg_cost,normalized_cost,max_violation_rate,"
         "feasibility_failures,tuned_q11\n";
  for (const SweepEntry& e : report.entries) {
    out << (e.period == 0 ? std::string("inf") : std::to_string(e.period))
        << ',' << (e.designed ? 1 : 0) << ',';
    if (e.designed)
      out << csv_number(e.report.avg_cost) << ','
          << csv_number(e.report.normalized_cost) << ','
          << csv_number(e.report.max_violation_rate) << ','
          << e.report.feasibility_failures << ',';
    else
      out << ",,,,";
    out << csv_number(e.tuned_q11) << "\n";
  }
  return out.str();
}

namespace {

LevelTable fill_level_table(const TighteningProfile& gamma,
                            const TighteningProfile& a,
                            const GeometricTail& tail, Eigen::Index period,
                            Eigen::Index steps) {
  if (steps < 1) throw ConfigError("tightening_table: steps must be positive");
  const TighteningProfile beta = rs_profile(gamma, a, tail);
  LevelTable table;
  table.period = period;
  table.gamma_max = gamma.saturation;
  const Eigen::Index rows = gamma.rows();
  table.gamma.resize(rows, steps);
  table.beta.resize(rows, steps);
  for (Eigen::Index k = 0; k < steps; ++k) {
    table.gamma.col(k) = gamma.column(k);
    table.beta.col(k) = beta.column(k);
  }
  if (period > 0) {
    const TighteningProfile beta_tilde = ms_profile(gamma, a, period, tail);
    table.beta_tilde.resize(rows, steps);
    for (Eigen::Index k = 0; k < steps; ++k)
      table.beta_tilde.col(k) = beta_tilde.column(k);
  }
  return table;
}

}  // namespace

LevelTable tightening_table(const ProjectConfig& config, Eigen::Index period,
                            Eigen::Index steps) {
  if (config.controllers.empty())
    throw ConfigError("tightening_table: config defines no controllers");
  const ControllerEntry& entry = config.controllers.front();
  ProfileKind profile = ProfileKind::Gamma;
  Eigen::Index gain_period = 0;
  if (entry.gain.kind == GainSpec::Kind::Tuned && !entry.gain.profile_explicit)
    tuned_defaults(entry, &profile, &gain_period);
  const Eigen::MatrixXd K =
      resolve_gain(config, entry.gain, profile, gain_period, nullptr);

  const ClosedLoopDesign loop = closed_loop(config.sys, config.constraints, K);
  const GeometricTail tail =
      geometric_tail(loop, config.sys.D, config.disturbance.box);
  const Eigen::Index k_bar =
      config.k_bar > 0 ? config.k_bar : default_tail_index(tail);
  const TighteningProfile gamma = stochastic_terms(
      loop, config.sys, config.disturbance, k_bar, config.scenario);
  const TighteningProfile a =
      robust_terms(loop, config.sys.D, config.disturbance.box, k_bar + 1);
  return fill_level_table(gamma, a, tail, period, steps);
}

LevelTable tightening_table(const ControllerDesign& design,
                            Eigen::Index period, Eigen::Index steps) {
  if (design.gamma.rows() == 0 || design.one_step.rows() == 0)
    throw ConfigError(
        "tightening_table: the design stores no tightening levels");
  return fill_level_table(design.gamma, design.one_step, design.tail, period,
                          steps);
}

std::string level_table_to_csv(const LevelTable& table) {
  std::ostringstream out;
  out << "i,row,gamma,beta,beta_tilde,gamma_max\n";
  for (Eigen::Index k = 0; k < table.gamma.cols(); ++k)
    for (Eigen::Index j = 0; j < table.gamma.rows(); ++j) {
      out << k << ',' << j << ',' << csv_number(table.gamma(j, k)) << ','
          << csv_number(table.beta(j, k)) << ',';
      if (table.beta_tilde.size() > 0)
        out << csv_number(table.beta_tilde(j, k));
      out << ',' << csv_number(table.gamma_max(j)) << "\n";
    }
  return out.str();
}

}  // namespace smpc
