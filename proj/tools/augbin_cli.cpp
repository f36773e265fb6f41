#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "augbin/errors.hpp"
#include "augbin/infer.hpp"
#include "augbin/modelfit.hpp"
#include "augbin/report.hpp"
#include "augbin/respprob.hpp"
#include "augbin/scenario.hpp"
#include "augbin/simharness.hpp"
#include "augbin/trialdata.hpp"

namespace {

using namespace augbin;

constexpr int kExitValidation = 2;
constexpr int kExitFailures = 3;

struct EndpointFlags {
  std::string kind;
  int time = 0;
  std::string intermediate;

  void add(CLI::App* cmd) {
    cmd->add_option("--endpoint", kind, "Response endpoint")->check(CLI::IsMember({"fixed", "bor", "bor-confirmed"}));
    cmd->add_option("--time", time, "Visit defining the endpoint (default: last visit)")->check(CLI::PositiveNumber);
    cmd->add_option("--intermediate", intermediate, "Fixed-time bound on earlier visits")
        ->check(CLI::IsMember({"unbounded", "growth"}));
  }

  /// Overrides `spec` with whatever was given on the command line.
  void apply(EndpointSpec& spec) const {
    if (!kind.empty()) spec.kind = parse_endpoint_kind(kind);
    if (time > 0) spec.horizon = time;
    if (intermediate == "growth") spec.intermediate = IntermediateBound::growth;
    if (intermediate == "unbounded") spec.intermediate = IntermediateBound::unbounded;
  }
};

std::vector<Method> parse_methods(const std::string& text) {
  if (text == "all") return {Method::bin, Method::eaugbin, Method::maug};
  std::vector<Method> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_method(item));
  if (out.empty()) throw InvalidArgument("no method selected");
  return out;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << text;
}

Scenario load_scenario_flags(const std::string& preset_name, const std::string& scenario_path) {
  if (!preset_name.empty() && !scenario_path.empty()) throw InvalidArgument("give either --preset or --scenario");
  if (!preset_name.empty()) return preset(preset_name);
  if (!scenario_path.empty()) return load_scenario(scenario_path);
  throw InvalidArgument("a --preset or --scenario is required");
}

std::function<void(int, int)> progress_printer(const std::string& label, bool quiet) {
  if (quiet) return {};
  return [label](int done, int total) {
    const int step = std::max(1, total / 20);
    if (done % step == 0 || done == total) std::cerr << label << ": " << done << "/" << total << '\n';
  };
}

QuadratureSettings quadrature_from(std::uint64_t seed, std::size_t eaugbin_points) {
  QuadratureSettings q;
  q.seed = seed;
  q.eaugbin_points_per_shift = std::max<std::size_t>(1, eaugbin_points / static_cast<std::size_t>(q.eaugbin_shifts));
  return q;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Response-probability estimation from tumour-size and new-lesion data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "augbin 1.0");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Fit the models to a dataset and estimate response probabilities");
  std::string data_path, config_path, method_text = "all", out_path, format = "csv", report_path;
  double alpha = 0.05;
  std::uint64_t seed = mvn::kDefaultSeed;
  int threads = 1;
  std::size_t eaugbin_points = std::size_t{1} << 16;
  EndpointFlags analyze_endpoint;
  analyze->add_option("--data", data_path, "Trial CSV (patient_id,arm,visit,size_mm,new_lesion)")
      ->required()
      ->check(CLI::ExistingFile);
  analyze->add_option("--config", config_path, "Sidecar key=value file (max_visits, thresholds)")
      ->check(CLI::ExistingFile);
  analyze_endpoint.add(analyze);
  analyze->add_option("--method", method_text, "bin, eaugbin, maug, a comma list, or all");
  analyze->add_option("--alpha", alpha, "Two-sided level of the intervals and tests")->check(CLI::Range(1e-6, 0.5));
  analyze->add_option("--seed", seed, "Quadrature seed");
  analyze->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  analyze->add_option("--eaugbin-samples", eaugbin_points, "Lattice points per eAugbin integral")
      ->check(CLI::PositiveNumber);
  analyze->add_option("--out", out_path, "Output file (default: standard output)");
  analyze->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  analyze->add_option("--report", report_path, "Also write a key=value report of the fitted model");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Operating characteristics of a single-arm scenario");
  std::vector<std::string> sim_presets;
  std::string sim_scenario, sim_methods = "bin,maug", sim_out, sim_replicates_out;
  int sim_reps = 500, sim_threads = 1;
  std::optional<std::uint64_t> sim_seed;
  double sim_alpha = 0.05;
  std::size_t truth_patients = 10'000'000;
  bool sim_quiet = false;
  EndpointFlags sim_endpoint;
  simulate->add_option("--preset", sim_presets, "Built-in scenario name (repeatable)");
  simulate->add_option("--scenario", sim_scenario, "Scenario file")->check(CLI::ExistingFile);
  sim_endpoint.add(simulate);
  simulate->add_option("--method", sim_methods, "bin, eaugbin, maug, a comma list, or all");
  simulate->add_option("--reps", sim_reps, "Replicates")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim_seed, "Override the scenario seed");
  simulate->add_option("--threads", sim_threads, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--alpha", sim_alpha, "Two-sided level of the intervals")->check(CLI::Range(1e-6, 0.5));
  simulate->add_option("--truth-patients", truth_patients, "Patients simulated for the true probability")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim_out, "Output file (default: standard output)");
  simulate->add_option("--replicates-out", sim_replicates_out, "Per-replicate estimates CSV");
  double sim_max_failures = 0.02;
  simulate->add_option("--max-failure-rate", sim_max_failures, "Largest tolerated share of failed replicates")
      ->check(CLI::Range(0.0, 1.0));
  simulate->add_flag("--quiet", sim_quiet, "No progress messages");

  // power
  auto* power = app.add_subcommand("power", "Power curve of a two-arm scenario over a grid of effects");
  std::string pow_preset, pow_scenario, pow_methods = "bin,maug", pow_out, tau_grid, psi_grid;
  int pow_reps = 500, pow_threads = 1;
  std::optional<std::uint64_t> pow_seed;
  double pow_alpha = 0.05;
  bool pow_quiet = false;
  EndpointFlags pow_endpoint;
  power->add_option("--preset", pow_preset, "Built-in two-arm scenario name");
  power->add_option("--scenario", pow_scenario, "Scenario file")->check(CLI::ExistingFile);
  pow_endpoint.add(power);
  power->add_option("--tau-grid", tau_grid, "start:stop:step or comma list of tau values");
  power->add_option("--psi-grid", psi_grid, "start:stop:step or comma list of psi values");
  power->add_option("--method", pow_methods, "bin, eaugbin, maug, a comma list, or all");
  power->add_option("--reps", pow_reps, "Replicates per grid point")->check(CLI::PositiveNumber);
  power->add_option("--seed", pow_seed, "Override the scenario seed");
  power->add_option("--threads", pow_threads, "Worker threads")->check(CLI::PositiveNumber);
  power->add_option("--alpha", pow_alpha, "Two-sided test level")->check(CLI::Range(1e-6, 0.5));
  power->add_option("--out", pow_out, "Output file (default: standard output)");
  double pow_max_failures = 0.02;
  power->add_option("--max-failure-rate", pow_max_failures, "Largest tolerated share of failed replicates")
      ->check(CLI::Range(0.0, 1.0));
  power->add_flag("--quiet", pow_quiet, "No progress messages");

  // permtest
  auto* permtest = app.add_subcommand("permtest", "Permutation test of the arm difference");
  std::string perm_data, perm_config, perm_preset, perm_scenario, perm_method = "maug", perm_out;
  int nperm = 999, perm_threads = 1;
  std::uint64_t perm_seed = 1, perm_replicate = 0;
  double perm_alpha = 0.05;
  bool perm_wald = false;
  EndpointFlags perm_endpoint;
  permtest->add_option("--data", perm_data, "Two-arm trial CSV")->check(CLI::ExistingFile);
  permtest->add_option("--config", perm_config, "Sidecar key=value file")->check(CLI::ExistingFile);
  permtest->add_option("--preset", perm_preset, "Simulate the data from a built-in two-arm scenario");
  permtest->add_option("--scenario", perm_scenario, "Simulate the data from a scenario file")->check(CLI::ExistingFile);
  permtest->add_option("--replicate", perm_replicate, "Replicate index of the simulated dataset");
  perm_endpoint.add(permtest);
  permtest->add_option("--method", perm_method, "bin, eaugbin or maug")
      ->check(CLI::IsMember({"bin", "eaugbin", "maug"}));
  permtest->add_option("--nperm", nperm, "Number of permutations")->check(CLI::Range(100, 1000000));
  permtest->add_option("--seed", perm_seed, "Permutation seed");
  permtest->add_option("--threads", perm_threads, "Worker threads")->check(CLI::PositiveNumber);
  permtest->add_option("--alpha", perm_alpha, "Level of the per-permutation Wald tests")->check(CLI::Range(1e-6, 0.5));
  permtest->add_flag("--wald", perm_wald, "Also run the Wald test on every permuted dataset");
  permtest->add_option("--out", perm_out, "Output file (default: standard output)");

  // generate
  auto* gen = app.add_subcommand("generate", "Write one simulated trial of a scenario as a dataset CSV");
  std::string gen_preset, gen_scenario, gen_out, gen_config_out;
  std::uint64_t gen_replicate = 0;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--preset", gen_preset, "Built-in scenario name");
  gen->add_option("--scenario", gen_scenario, "Scenario file")->check(CLI::ExistingFile);
  gen->add_option("--replicate", gen_replicate, "Replicate index");
  gen->add_option("--seed", gen_seed, "Override the scenario seed");
  gen->add_option("--out", gen_out, "Output file (default: standard output)");
  gen->add_option("--config-out", gen_config_out, "Also write the sidecar config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) {
      const DatasetConfig cfg = config_path.empty() ? DatasetConfig{} : load_config(config_path);
      const TrialDataset data = load_csv(data_path, cfg);
      EndpointSpec spec;
      spec.horizon = data.max_visits;
      spec.response = data.thresholds.response;
      spec.growth = data.thresholds.growth;
      analyze_endpoint.apply(spec);
      const auto methods = parse_methods(method_text);
      const bool two_arm = data.two_arm();
      const QuadratureSettings quad = quadrature_from(seed, eaugbin_points);
      DeltaOptions delta;
      delta.threads = threads;
      FittedModel fit;
      const bool model = std::any_of(methods.begin(), methods.end(), [](Method m) { return m != Method::bin; });
      if (model) fit = assemble(data, two_arm);
      std::vector<EstimateRow> rows;
      std::vector<std::pair<std::string, std::string>> kv;
      for (Method m : methods) {
        const ResponseEvaluator ev(data, fit, spec, m, quad);
        const ResponseEstimate est = ci_logit_delta(ev, fit.theta_cov, alpha, delta);
        rows.push_back(estimate_row(est, spec));
        for (const auto& w : est.warnings) std::cerr << "warning (" << to_string(m) << "): " << w << '\n';
        if (two_arm) {
          const TestResult t = m == Method::bin ? bin_two_arm_test(data, spec) : wald_difference_test(ev, fit.theta_cov, delta);
          for (const auto& w : t.warnings) {
            if (std::find(est.warnings.begin(), est.warnings.end(), w) == est.warnings.end()) {
              std::cerr << "warning (" << to_string(m) << " test): " << w << '\n';
            }
          }
          rows.push_back(difference_row(t, spec));
        }
      }
      std::ostringstream out;
      if (format == "json") {
        write_estimates_json(out, rows);
      } else {
        write_estimates_csv(out, rows);
      }
      emit(out_path, out.str());
      if (!report_path.empty()) {
        std::ostringstream rep;
        rep << "patients=" << data.patients.size() << '\n';
        rep << "endpoint=" << to_string(spec.kind) << '\n';
        rep << "time=" << spec.horizon << '\n';
        for (const auto& r : rows) {
          const std::string key = r.kind + "." + r.method + ".";
          rep << key << "estimate=" << csv_number(r.estimate) << '\n';
          rep << key << "se=" << csv_number(r.se) << '\n';
          if (r.kind == "estimate") {
            rep << key << "ci_lower=" << csv_number(r.ci_lower) << '\n';
            rep << key << "ci_upper=" << csv_number(r.ci_upper) << '\n';
          } else {
            rep << key << "statistic=" << csv_number(r.statistic) << '\n';
            rep << key << "p_value=" << csv_number(r.p_value) << '\n';
          }
        }
        if (model) {
          std::ostringstream fit_text;
          write_report(fit_text, fit);
          std::string line;
          std::istringstream lines(fit_text.str());
          while (std::getline(lines, line)) rep << "model." << line << '\n';
        }
        emit(report_path, rep.str());
      }
    } else if (*simulate) {
      std::vector<Scenario> scenarios;
      for (const auto& name : sim_presets) scenarios.push_back(preset(name));
      if (!sim_scenario.empty()) scenarios.push_back(load_scenario(sim_scenario));
      if (scenarios.empty()) throw InvalidArgument("a --preset or --scenario is required");
      RunOptions opt;
      opt.reps = sim_reps;
      opt.threads = sim_threads;
      opt.methods = parse_methods(sim_methods);
      opt.alpha = sim_alpha;
      opt.truth_patients = truth_patients;
      opt.max_failure_rate = sim_max_failures;
      opt.delta.threads = 1;
      std::vector<OperatingCharacteristics> rows;
      for (auto& s : scenarios) {
        if (sim_seed) s.seed = *sim_seed;
        sim_endpoint.apply(s.endpoint);
        s.validate();
        opt.progress = progress_printer(s.name, sim_quiet);
        rows.push_back(run_single_arm(s, opt));
      }
      std::ostringstream out;
      write_oc_csv(out, rows);
      emit(sim_out, out.str());
      if (!sim_replicates_out.empty()) {
        std::ostringstream reps;
        for (const auto& oc : rows) write_replicates_csv(reps, oc);
        emit(sim_replicates_out, reps.str());
      }
    } else if (*power) {
      Scenario s = load_scenario_flags(pow_preset, pow_scenario);
      if (pow_seed) s.seed = *pow_seed;
      pow_endpoint.apply(s.endpoint);
      s.validate();
      RunOptions opt;
      opt.reps = pow_reps;
      opt.threads = pow_threads;
      opt.methods = parse_methods(pow_methods);
      opt.alpha = pow_alpha;
      opt.max_failure_rate = pow_max_failures;
      opt.progress = progress_printer(s.name, pow_quiet);
      const auto taus = tau_grid.empty() ? std::vector<double>{} : parse_grid(tau_grid);
      const auto psis = psi_grid.empty() ? std::vector<double>{} : parse_grid(psi_grid);
      const auto points = run_two_arm_power(s, taus, psis, opt);
      std::ostringstream out;
      write_power_csv(out, s.name, s.endpoint, points);
      emit(pow_out, out.str());
    } else if (*gen) {
      Scenario s = load_scenario_flags(gen_preset, gen_scenario);
      if (gen_seed) s.seed = *gen_seed;
      const TrialDataset data = generate(s, gen_replicate);
      std::ostringstream out;
      write_csv(out, data);
      emit(gen_out, out.str());
      if (!gen_config_out.empty()) {
        std::ostringstream cfg;
        cfg << "max_visits=" << data.max_visits << '\n';
        cfg << "response_threshold=" << format_double(data.thresholds.response) << '\n';
        cfg << "growth_threshold=" << format_double(data.thresholds.growth) << '\n';
        emit(gen_config_out, cfg.str());
      }
    } else if (*permtest) {
      TrialDataset data;
      EndpointSpec spec;
      if (!perm_data.empty()) {
        if (!perm_preset.empty() || !perm_scenario.empty()) throw InvalidArgument("give either --data or a scenario");
        const DatasetConfig cfg = perm_config.empty() ? DatasetConfig{} : load_config(perm_config);
        data = load_csv(perm_data, cfg);
        spec.horizon = data.max_visits;
        spec.response = data.thresholds.response;
        spec.growth = data.thresholds.growth;
      } else {
        const Scenario s = load_scenario_flags(perm_preset, perm_scenario);
        data = generate(s, perm_replicate);
        spec = s.endpoint;
      }
      perm_endpoint.apply(spec);
      PermutationOptions opt;
      opt.n_perm = nperm;
      opt.seed = perm_seed;
      opt.threads = perm_threads;
      opt.wald = perm_wald;
      opt.alpha = perm_alpha;
      const Method method = parse_method(perm_method);
      const PermutationResult result = permutation_test(data, spec, method, opt);
      std::ostringstream out;
      write_permutation_csv(out, result, method, spec);
      emit(perm_out, out.str());
    }
  } catch (const TooManyFailures& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailures;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
