#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "augbin/errors.hpp"
#include "augbin/infer.hpp"
#include "augbin/modelfit.hpp"
#include "augbin/mvnquad.hpp"
#include "augbin/report.hpp"
#include "augbin/respprob.hpp"
#include "augbin/scenario.hpp"
#include "augbin/simharness.hpp"
#include "augbin/trialdata.hpp"

namespace py = pybind11;
using namespace augbin;

namespace {

EndpointSpec make_endpoint(const TrialDataset& data, const std::string& endpoint, std::optional<int> time,
                           const std::string& intermediate) {
  EndpointSpec spec;
  spec.kind = parse_endpoint_kind(endpoint);
  spec.horizon = time.value_or(data.max_visits);
  spec.response = data.thresholds.response;
  spec.growth = data.thresholds.growth;
  spec.intermediate = intermediate == "growth" ? IntermediateBound::growth : IntermediateBound::unbounded;
  return spec;
}

std::vector<Method> methods_from(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names) out.push_back(parse_method(n));
  return out;
}

Scenario scenario_from(const std::string& name_or_path) {
  for (const auto& n : preset_names())
    if (n == name_or_path) return preset(n);
  return load_scenario(name_or_path);
}

py::dict estimate_dict(const ResponseEstimate& e) {
  py::dict d;
  d["method"] = to_string(e.method);
  d["estimate"] = e.mean_probability;
  d["se"] = e.std_error;
  d["ci_lower"] = e.ci.lower;
  d["ci_upper"] = e.ci.upper;
  d["wilson_fallback"] = e.wilson_fallback;
  d["warnings"] = e.warnings;
  return d;
}

py::dict test_dict(const TestResult& t) {
  py::dict d;
  d["method"] = t.method;
  d["estimate"] = t.estimate;
  d["se"] = t.std_error;
  d["statistic"] = t.statistic;
  d["p_value"] = t.p_value;
  d["separated"] = t.separated;
  d["warnings"] = t.warnings;
  return d;
}

}  // namespace

PYBIND11_MODULE(_augbin, m) {
  m.doc() = "Response-probability estimation from tumour-size and new-lesion data";

  auto base = py::register_exception<Error>(m, "Error", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<InsufficientData>(m, "InsufficientData", base.ptr());
  py::register_exception<TooManyFailures>(m, "TooManyFailures", base.ptr());

  m.def(
      "mvn_rect_prob",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& lower,
         const Eigen::VectorXd& upper, double abs_tol, std::uint64_t seed) {
        mvn::QmcOptions o;
        o.abs_tol = abs_tol;
        o.seed = seed;
        const auto r = mvn::mvn_rect_prob({mean, cov}, {lower, upper}, o);
        return py::make_tuple(r.probability, r.error_estimate);
      },
      py::arg("mean"), py::arg("cov"), py::arg("lower"), py::arg("upper"), py::arg("abs_tol") = 1e-5,
      py::arg("seed") = mvn::kDefaultSeed,
      "Probability that N(mean, cov) falls in [lower, upper]; returns (probability, error estimate).");

  m.def(
      "wilson_ci",
      [](int successes, int n, double alpha) {
        const auto ci = wilson_ci(successes, n, alpha);
        return py::make_tuple(ci.lower, ci.upper);
      },
      py::arg("successes"), py::arg("n"), py::arg("alpha") = 0.05);

  py::class_<TrialDataset>(m, "Dataset")
      .def_property_readonly("patients", [](const TrialDataset& d) { return d.patients.size(); })
      .def_readonly("max_visits", &TrialDataset::max_visits)
      .def_property_readonly("two_arm", &TrialDataset::two_arm)
      .def("to_csv", [](const TrialDataset& d) {
        std::ostringstream out;
        write_csv(out, d);
        return out.str();
      });

  m.def(
      "load_csv",
      [](const std::string& path, std::optional<std::string> config) {
        return load_csv(path, config ? load_config(*config) : DatasetConfig{});
      },
      py::arg("path"), py::arg("config") = py::none());
  m.def(
      "read_csv",
      [](const std::string& text, std::optional<int> max_visits) {
        std::istringstream in(text);
        DatasetConfig cfg;
        cfg.max_visits = max_visits;
        return read_csv(in, cfg);
      },
      py::arg("text"), py::arg("max_visits") = py::none());

  m.def("preset_names", &preset_names);
  m.def(
      "generate", [](const std::string& scenario, std::uint64_t replicate) { return generate(scenario_from(scenario), replicate); },
      py::arg("scenario"), py::arg("replicate") = 0, "Simulated trial from a preset name or scenario file.");

  py::class_<FittedModel>(m, "FittedModel")
      .def_readonly("theta", &FittedModel::theta)
      .def_readonly("theta_cov", &FittedModel::theta_cov)
      .def_readonly("warnings", &FittedModel::warnings)
      .def_readonly("loglik_tumour", &FittedModel::loglik_tumour)
      .def_readonly("loglik_progression", &FittedModel::loglik_progression)
      .def_property_readonly("names", [](const FittedModel& f) { return f.layout.names(); })
      .def_property_readonly("sigma", [](const FittedModel& f) { return f.tumour.cov; })
      .def("report", [](const FittedModel& f) {
        std::ostringstream out;
        write_report(out, f);
        return out.str();
      });

  m.def(
      "fit", [](const TrialDataset& data, std::optional<bool> two_arm) { return assemble(data, two_arm.value_or(data.two_arm())); },
      py::arg("data"), py::arg("two_arm") = py::none());

  m.def(
      "estimate",
      [](const TrialDataset& data, const std::string& method, const std::string& endpoint, std::optional<int> time,
         double alpha, const std::string& intermediate, std::uint64_t seed) {
        const auto spec = make_endpoint(data, endpoint, time, intermediate);
        const Method meth = parse_method(method);
        FittedModel fit;
        if (meth != Method::bin) fit = assemble(data, data.two_arm());
        QuadratureSettings q;
        q.seed = seed;
        return estimate_dict(ci_logit_delta(data, fit, spec, meth, alpha, q));
      },
      py::arg("data"), py::arg("method") = "maug", py::arg("endpoint") = "fixed", py::arg("time") = py::none(),
      py::arg("alpha") = 0.05, py::arg("intermediate") = "unbounded", py::arg("seed") = mvn::kDefaultSeed,
      "Mean response probability with a confidence interval.");

  m.def(
      "two_arm_test",
      [](const TrialDataset& data, const std::string& method, const std::string& endpoint, std::optional<int> time) {
        const auto spec = make_endpoint(data, endpoint, time, "unbounded");
        const Method meth = parse_method(method);
        if (meth == Method::bin) return test_dict(bin_two_arm_test(data, spec));
        return test_dict(wald_difference_test(data, assemble(data, true), spec, meth));
      },
      py::arg("data"), py::arg("method") = "maug", py::arg("endpoint") = "fixed", py::arg("time") = py::none());

  m.def(
      "permutation_test",
      [](const TrialDataset& data, const std::string& method, const std::string& endpoint, std::optional<int> time,
         int n_perm, std::uint64_t seed, int threads) {
        const auto spec = make_endpoint(data, endpoint, time, "unbounded");
        PermutationOptions o;
        o.n_perm = n_perm;
        o.seed = seed;
        o.threads = threads;
        const auto r = permutation_test(data, spec, parse_method(method), o);
        py::dict d;
        d["observed"] = r.observed;
        d["p_value"] = r.p_value;
        d["statistics"] = r.statistics;
        d["failures"] = r.failures;
        return d;
      },
      py::arg("data"), py::arg("method") = "maug", py::arg("endpoint") = "fixed", py::arg("time") = py::none(),
      py::arg("n_perm") = 999, py::arg("seed") = 1, py::arg("threads") = 1);

  m.def(
      "simulate",
      [](const std::string& scenario, int reps, const std::vector<std::string>& methods, std::size_t truth_patients,
         int threads) {
        RunOptions o;
        o.reps = reps;
        o.methods = methods_from(methods);
        o.truth_patients = truth_patients;
        o.threads = threads;
        const auto oc = run_single_arm(scenario_from(scenario), o);
        py::dict d;
        d["scenario"] = oc.scenario;
        d["true"] = oc.truth.probability;
        d["replicates"] = oc.replicates;
        d["failures"] = oc.failures;
        py::dict per;
        for (const auto& s : oc.methods) {
          py::dict row;
          row["mean"] = s.mean_estimate;
          row["coverage"] = s.coverage;
          row["width"] = s.mean_width;
          row["width_reduction"] = s.width_reduction;
          per[py::str(to_string(s.method))] = row;
        }
        d["methods"] = per;
        return d;
      },
      py::arg("scenario"), py::arg("reps") = 500, py::arg("methods") = std::vector<std::string>{"bin", "maug"},
      py::arg("truth_patients") = 10'000'000, py::arg("threads") = 1,
      "Operating characteristics of a single-arm preset or scenario file.");

  m.def(
      "power",
      [](const std::string& scenario, const std::vector<double>& taus, int reps, const std::vector<std::string>& methods,
         int threads) {
        RunOptions o;
        o.reps = reps;
        o.methods = methods_from(methods);
        o.threads = threads;
        py::list out;
        for (const auto& p : run_two_arm_power(scenario_from(scenario), taus, {}, o)) {
          py::dict row;
          row["tau"] = p.tau;
          row["psi"] = p.psi;
          row["method"] = to_string(p.method);
          row["power"] = p.power;
          row["se"] = p.std_error;
          row["failures"] = p.failures;
          out.append(row);
        }
        return out;
      },
      py::arg("scenario"), py::arg("taus"), py::arg("reps") = 500,
      py::arg("methods") = std::vector<std::string>{"bin", "maug"}, py::arg("threads") = 1);
}
