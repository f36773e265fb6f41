#include "augbin/simharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>

#include "augbin/detail/parallel.hpp"
#include "augbin/errors.hpp"
#include "augbin/normal.hpp"

namespace augbin {

namespace {

constexpr std::uint64_t kTruthStream = 0x7275746800000000ULL;
constexpr std::size_t kTruthChunk = std::size_t{1} << 16;

class PatientGenerator {
 public:
  explicit PatientGenerator(const Scenario& s) : s_(s) {
    s.validate();
    chol_ = s.cov.llt().matrixL();
    for (int arm = 0; arm < s.arms; ++arm) mean_[arm] = s.arm_mean(arm);
  }

  /// Draws one patient. The number of random draws per patient is fixed, so
  /// streams stay aligned across parameter changes.
  PatientRecord draw(std::mt19937_64& rng, int arm, std::string id) const {
    const int T = s_.visits;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    PatientRecord p;
    p.id = std::move(id);
    if (s_.arms == 2) p.arm = arm;
    double z0 = 0.0;
    do {
      z0 = s_.baseline_lower + (s_.baseline_upper - s_.baseline_lower) * unif(rng);
    } while (!(z0 > 0.0));
    p.baseline = z0;
    Eigen::VectorXd eps(T);
    for (int t = 0; t < T; ++t) eps[t] = normal(rng);
    const Eigen::VectorXd y = mean_[arm] + chol_ * eps;
    double u[64];
    for (int t = 0; t < T; ++t) u[t] = unif(rng);
    const double arm_term = s_.arms == 2 && arm == 1 ? s_.beta : 0.0;
    double previous = z0;
    for (int t = 1; t <= T; ++t) {
      const double size = z0 * std::exp(y[t - 1]);
      const double hazard = std::isinf(s_.alpha) ? 0.0 : expit(s_.alpha + arm_term + s_.gamma * previous);
      const int lesion = u[t - 1] < hazard ? 1 : 0;
      p.sizes.push_back(size);
      p.new_lesion.push_back(lesion);
      if (lesion) break;
      if (s_.growth_censoring && y[t - 1] > s_.endpoint.growth) break;
      previous = size;
    }
    return p;
  }

 private:
  const Scenario& s_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd mean_[2];
};

std::string patient_id(int arm, int index, bool two_arm) {
  std::ostringstream os;
  if (two_arm) os << (arm == 0 ? 'C' : 'E');
  else os << 'P';
  os << index + 1;
  return os.str();
}

bool needs_model(const std::vector<Method>& methods) {
  return std::any_of(methods.begin(), methods.end(), [](Method m) { return m != Method::bin; });
}

}  // namespace

TrialDataset generate(const Scenario& scenario, std::uint64_t replicate) {
  if (scenario.visits > 64) throw InvalidArgument("at most 64 visits are supported");
  const PatientGenerator gen(scenario);
  std::mt19937_64 rng(detail::stream_seed(scenario.seed, replicate));
  TrialDataset data;
  data.max_visits = scenario.visits;
  data.thresholds = scenario.endpoint.thresholds();
  for (int arm = 0; arm < scenario.arms; ++arm) {
    for (int i = 0; i < scenario.n; ++i) data.patients.push_back(gen.draw(rng, arm, patient_id(arm, i, scenario.arms == 2)));
  }
  return data;
}

TrueProbability true_probability(const Scenario& scenario, const EndpointSpec& endpoint, std::size_t patients, int arm,
                                 int threads) {
  if (arm < 0 || arm >= scenario.arms) throw InvalidArgument("arm is not part of the scenario");
  if (patients == 0) throw InvalidArgument("true probability needs at least one patient");
  if (endpoint.horizon > scenario.visits) throw InvalidArgument("endpoint time exceeds the number of visits");
  const PatientGenerator gen(scenario);
  const std::size_t chunks = (patients + kTruthChunk - 1) / kTruthChunk;
  std::vector<std::size_t> hits(chunks, 0);
  detail::parallel_for(chunks, threads, [&](std::size_t c) {
    std::mt19937_64 rng(detail::stream_seed(scenario.seed ^ kTruthStream, c));
    const std::size_t count = std::min(kTruthChunk, patients - c * kTruthChunk);
    std::size_t h = 0;
    for (std::size_t i = 0; i < count; ++i) h += observed_response(gen.draw(rng, arm, {}), endpoint);
    hits[c] = h;
  });
  std::size_t total = 0;
  for (auto h : hits) total += h;
  TrueProbability t;
  t.patients = patients;
  t.probability = static_cast<double>(total) / static_cast<double>(patients);
  t.std_error = std::sqrt(t.probability * (1.0 - t.probability) / static_cast<double>(patients));
  return t;
}

OperatingCharacteristics run_single_arm(const Scenario& scenario, const RunOptions& options) {
  scenario.validate();
  if (scenario.arms != 1) throw InvalidArgument("run_single_arm needs a single-arm scenario");
  if (options.reps < 1) throw InvalidArgument("at least one replicate is required");
  if (options.methods.empty()) throw InvalidArgument("no methods selected");
  const EndpointSpec& endpoint = scenario.endpoint;

  OperatingCharacteristics oc;
  oc.scenario = scenario.name;
  oc.endpoint = endpoint;
  oc.truth = true_probability(scenario, endpoint, options.truth_patients, 0, options.threads);

  struct Replicate {
    bool ok = false;
    double wilson_width = 0.0;
    std::vector<ResponseEstimate> estimates;
  };
  const auto reps = static_cast<std::size_t>(options.reps);
  std::vector<Replicate> results(reps);
  std::mutex progress_mutex;
  int done = 0;
  const bool model = needs_model(options.methods);
  detail::parallel_for(reps, options.threads, [&](std::size_t r) {
    Replicate rep;
    try {
      const TrialDataset data = generate(scenario, options.replicate_offset + r);
      FittedModel fit;
      if (model) fit = assemble(data, false);
      int responders = 0;
      for (const auto& p : data.patients) responders += observed_response(p, endpoint);
      const Interval w = wilson_ci(responders, static_cast<int>(data.patients.size()), options.alpha);
      rep.wilson_width = w.upper - w.lower;
      for (Method m : options.methods) {
        const ResponseEvaluator ev(data, fit, endpoint, m, options.quadrature);
        rep.estimates.push_back(ci_logit_delta(ev, fit.theta_cov, options.alpha, options.delta));
      }
      rep.ok = true;
    } catch (const Error&) {
      rep = Replicate{};
    }
    results[r] = std::move(rep);
    if (options.progress) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      options.progress(++done, options.reps);
    }
  });

  const std::size_t k = options.methods.size();
  std::vector<double> est(k, 0.0), cover(k, 0.0), width(k, 0.0), reduction(k, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto& rep = results[r];
    if (!rep.ok) {
      ++oc.failures;
      continue;
    }
    ++oc.replicates;
    for (std::size_t j = 0; j < k; ++j) {
      const auto& e = rep.estimates[j];
      const double w = e.ci.upper - e.ci.lower;
      est[j] += e.mean_probability;
      cover[j] += (e.ci.lower <= oc.truth.probability && oc.truth.probability <= e.ci.upper) ? 1.0 : 0.0;
      width[j] += w;
      reduction[j] += 1.0 - w / rep.wilson_width;
      oc.estimates.push_back({static_cast<int>(options.replicate_offset + r), options.methods[j], e.mean_probability,
                              e.ci.lower, e.ci.upper});
    }
  }
  if (oc.failures > options.max_failure_rate * static_cast<double>(reps)) {
    throw TooManyFailures(std::to_string(oc.failures) + " of " + std::to_string(reps) + " replicates failed");
  }
  const double n = std::max(oc.replicates, 1);
  for (std::size_t j = 0; j < k; ++j) {
    oc.methods.push_back({options.methods[j], est[j] / n, cover[j] / n, width[j] / n, reduction[j] / n});
  }
  return oc;
}

std::vector<PowerPoint> run_two_arm_power(const Scenario& scenario, const std::vector<double>& taus,
                                          const std::vector<double>& psis, const RunOptions& options) {
  scenario.validate();
  if (scenario.arms != 2) throw InvalidArgument("power runs need a two-arm scenario");
  if (options.reps < 1) throw InvalidArgument("at least one replicate is required");
  if (options.methods.empty()) throw InvalidArgument("no methods selected");
  const std::vector<double> psi_grid = psis.empty() ? std::vector<double>{scenario.psi} : psis;
  const std::vector<double> tau_grid = taus.empty() ? std::vector<double>{scenario.tau} : taus;
  const EndpointSpec& endpoint = scenario.endpoint;
  const std::size_t k = options.methods.size();
  const auto reps = static_cast<std::size_t>(options.reps);
  const bool model = needs_model(options.methods);
  const int total = static_cast<int>(tau_grid.size() * psi_grid.size()) * options.reps;
  int done = 0;
  std::mutex progress_mutex;

  std::vector<PowerPoint> out;
  for (double psi : psi_grid) {
    for (double tau : tau_grid) {
      Scenario s = scenario;
      s.tau = tau;
      s.psi = psi;
      // 1 reject, 0 accept, -1 failed; per replicate and method.
      std::vector<std::vector<int>> decision(reps, std::vector<int>(k, -1));
      detail::parallel_for(reps, options.threads, [&](std::size_t r) {
        try {
          const TrialDataset data = generate(s, options.replicate_offset + r);
          std::optional<FittedModel> fit;
          if (model) {
            try {
              fit = assemble(data, true);
            } catch (const Error&) {
            }
          }
          for (std::size_t j = 0; j < k; ++j) {
            try {
              const Method m = options.methods[j];
              double p;
              if (m == Method::bin) {
                p = bin_two_arm_test(data, endpoint).p_value;
              } else {
                if (!fit) continue;
                const ResponseEvaluator ev(data, *fit, endpoint, m, options.quadrature);
                p = wald_difference_test(ev, fit->theta_cov, options.delta).p_value;
              }
              decision[r][j] = p < options.alpha ? 1 : 0;
            } catch (const Error&) {
            }
          }
        } catch (const Error&) {
        }
        if (options.progress) {
          std::lock_guard<std::mutex> lock(progress_mutex);
          options.progress(++done, total);
        }
      });
      for (std::size_t j = 0; j < k; ++j) {
        PowerPoint pt;
        pt.tau = tau;
        pt.psi = psi;
        pt.method = options.methods[j];
        int rejections = 0;
        for (std::size_t r = 0; r < reps; ++r) {
          if (decision[r][j] < 0) {
            ++pt.failures;
          } else {
            ++pt.replicates;
            rejections += decision[r][j];
          }
        }
        if (pt.failures > options.max_failure_rate * static_cast<double>(reps)) {
          throw TooManyFailures(std::to_string(pt.failures) + " of " + std::to_string(reps) + " replicates failed for " +
                                to_string(pt.method) + " at tau=" + format_double(tau));
        }
        pt.power = pt.replicates > 0 ? static_cast<double>(rejections) / pt.replicates : 0.0;
        pt.std_error = pt.replicates > 0 ? std::sqrt(pt.power * (1.0 - pt.power) / pt.replicates) : 0.0;
        out.push_back(pt);
      }
    }
  }
  return out;
}

std::vector<TimingResult> timing_probe(const Scenario& scenario, const std::vector<Method>& methods, int reps,
                                       bool with_interval, const QuadratureSettings& quadrature) {
  if (reps < 5) throw InvalidArgument("timing needs at least five replicates");
  const bool two_arm = scenario.arms == 2;
  std::vector<std::vector<double>> seconds(methods.size());
  for (int r = 0; r < reps; ++r) {
    const TrialDataset data = generate(scenario, static_cast<std::uint64_t>(r));
    for (std::size_t j = 0; j < methods.size(); ++j) {
      const Method m = methods[j];
      const auto start = std::chrono::steady_clock::now();
      AssembleOptions fo;
      fo.covariance = with_interval;
      FittedModel fit;
      if (m != Method::bin) fit = assemble(data, two_arm, fo);
      const ResponseEvaluator ev(data, fit, scenario.endpoint, m, quadrature);
      if (two_arm) {
        if (m == Method::bin) {
          bin_two_arm_test(data, scenario.endpoint);
        } else if (with_interval) {
          wald_difference_test(ev, fit.theta_cov);
        } else {
          ev.difference(fit.theta);
        }
      } else if (with_interval) {
        ci_logit_delta(ev, fit.theta_cov);
      } else {
        ev.mean(fit.theta);
      }
      const auto stop = std::chrono::steady_clock::now();
      seconds[j].push_back(std::chrono::duration<double>(stop - start).count());
    }
  }
  std::vector<TimingResult> out;
  for (std::size_t j = 0; j < methods.size(); ++j) {
    auto v = seconds[j];
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    out.push_back({methods[j], median, reps});
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  auto number = [&](const std::string& t) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != t.size()) throw InvalidArgument("bad grid value '" + t + "' in '" + text + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw InvalidArgument("grid must look like start:stop:step");
    const double a = number(parts[0]), b = number(parts[1]), step = number(parts[2]);
    if (!(step > 0.0) || b < a) throw InvalidArgument("grid needs start <= stop and a positive step");
    const auto count = static_cast<long>(std::floor((b - a) / step + 1e-9)) + 1;
    for (long i = 0; i < count; ++i) out.push_back(std::round((a + i * step) * 1e12) / 1e12);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(number(item));
  if (out.empty()) throw InvalidArgument("empty grid");
  return out;
}

}  // namespace augbin
