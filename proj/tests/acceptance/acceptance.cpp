// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Run a subset with e.g. `acceptance 1 3`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "augbin/infer.hpp"
#include "augbin/modelfit.hpp"
#include "augbin/mvnquad.hpp"
#include "augbin/respprob.hpp"
#include "augbin/scenario.hpp"
#include "augbin/simharness.hpp"
#include "augbin/trialdata.hpp"
#include "../support.hpp"

using namespace augbin;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// 1. Bivariate orthant probabilities.
Outcome quadrature_correctness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (double rho : {-0.9, -0.5, 0.0, 0.5, 0.9}) {
    Eigen::Matrix2d cov;
    cov << 1, rho, rho, 1;
    const mvn::MvnSpec spec{Eigen::Vector2d::Zero(), cov};
    const mvn::Rectangle orthant{Eigen::Vector2d::Zero(), Eigen::Vector2d::Constant(mvn::kInf)};
    const double exact = 0.25 + std::asin(rho) / (2 * std::numbers::pi);
    worst = std::max(worst, std::abs(mvn::mvn_rect_prob(spec, orthant).probability - exact));
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-4 && elapsed < 1.0, "max |error| = " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

// 2. eAugbin against a brute-force simulation of the model.
Outcome oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  double worst = 0.0;
  const std::size_t draws = 1'000'000;
  for (int c = 0; c < 10; ++c) {
    const int T = c < 5 ? 2 : 3;
    const auto model = augbin::testing::random_model(T, rng, true);
    const double z0 = u(rng);
    const auto p = augbin::testing::patient(z0, {z0});
    for (auto kind : {EndpointKind::fixed_time, EndpointKind::bor_unconfirmed}) {
      EndpointSpec spec;
      spec.kind = kind;
      spec.horizon = T;
      const bool fixed = kind == EndpointKind::fixed_time;
      const auto mc = augbin::testing::simulate_response(z0, 0, model.tumour, model.progression, spec, !fixed, draws,
                                                         1000 + 2 * c + (fixed ? 0 : 1));
      // Quadrature standard error from independent lattice randomizations.
      std::vector<double> v;
      for (std::uint64_t s = 1; s <= 5; ++s) {
        QuadratureSettings q;
        q.seed = s;
        v.push_back(fixed ? prob_fixed_eaugbin(p, model, spec, q) : prob_bor_eaugbin(p, model, spec, q));
      }
      double m = 0, ss = 0;
      for (double x : v) m += x / v.size();
      for (double x : v) ss += (x - m) * (x - m);
      const double se_q = std::sqrt(ss / (v.size() - 1));
      const double est = v.front();
      const double se = std::sqrt(mc.std_error * mc.std_error + se_q * se_q);
      worst = std::max(worst, std::abs(est - mc.probability) / se);
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= 3.0 && elapsed < 300.0,
          "max |eAugbin - MC| / combined SE = " + fmt(worst) + " over 20 comparisons, " + fmt(elapsed) + " s"};
}

// 3. With gamma = 0 the two engines agree.
Outcome independence_limit() {
  constexpr double tolerance = 1e-4;  // quadrature tolerance of the eAugbin lattice and mAug rectangles
  std::mt19937_64 rng(77);
  const TrialDataset cohort = generate(preset("bor-T4-a15"), 0);
  double worst = 0.0;
  for (int c = 0; c < 10; ++c) {
    const int T = 2 + c % 3;
    const auto model = augbin::testing::random_model(T, rng, false);
    TrialDataset d = cohort;
    d.max_visits = T;
    for (auto& q : d.patients) {
      if (q.last_observed() > T) {
        q.sizes.resize(T);
        q.new_lesion.resize(T);
      }
    }
    const auto& p = d.patients[static_cast<std::size_t>(c)];
    EndpointSpec fixed;
    fixed.horizon = T;
    EndpointSpec bor = fixed;
    bor.kind = EndpointKind::bor_unconfirmed;
    worst = std::max(worst, std::abs(prob_fixed_maug(p, model, fixed, d) - prob_fixed_eaugbin(p, model, fixed)));
    worst = std::max(worst, std::abs(prob_bor_maug(p, model, bor, d) - prob_bor_eaugbin(p, model, bor)));
  }
  return {worst <= 2 * tolerance, "max |mAug - eAugbin| = " + fmt(worst) + " (bound " + fmt(2 * tolerance) + ")"};
}

Outcome single_arm_oc(const std::string& name, double truth, double cov_lo, double cov_hi, double red_lo,
                         double red_hi) {
  const auto start = std::chrono::steady_clock::now();
  RunOptions o;
  o.reps = 500;
  o.methods = {Method::bin, Method::maug};
  const auto oc = run_single_arm(preset(name), o);
  const auto& m = oc.methods[1];
  const bool mean_ok = std::abs(m.mean_estimate - truth) <= 0.02;
  const bool cov_ok = m.coverage >= cov_lo && m.coverage <= cov_hi;
  const bool red_ok = m.width_reduction >= red_lo && m.width_reduction <= red_hi;
  std::string detail = "mAug mean " + fmt(m.mean_estimate) + (mean_ok ? "" : " [out]") + ", coverage " +
                       fmt(m.coverage) + (cov_ok ? "" : " [out]") + ", width reduction " +
                       fmt(100 * m.width_reduction) + "%" + (red_ok ? "" : " [out]") + "; simulated truth " +
                       fmt(oc.truth.probability) + ", " + fmt(seconds_since(start), 3) + " s";
  return {mean_ok && cov_ok && red_ok, detail};
}

const PowerPoint& point(const std::vector<PowerPoint>& pts, double tau, Method m) {
  for (const auto& p : pts)
    if (std::abs(p.tau - tau) < 1e-12 && p.method == m) return p;
  throw std::runtime_error("missing power point");
}

// 6. Type I error under the null.
Outcome type_one_error() {
  const auto start = std::chrono::steady_clock::now();
  RunOptions o;
  o.reps = 1000;
  o.methods = {Method::bin, Method::maug};
  const auto fixed = run_two_arm_power(preset("fixed-T2"), {0.0}, {}, o);
  const auto bor = run_two_arm_power(preset("bor-T4"), {0.0}, {}, o);
  const double f = point(fixed, 0, Method::maug).power;
  const double b = point(bor, 0, Method::maug).power;
  const double bb = point(bor, 0, Method::bin).power;
  const bool ok = std::abs(f - 0.055) <= 0.02 && std::abs(b - 0.058) <= 0.02 && std::abs(bb - 0.041) <= 0.02;
  return {ok, "mAug fixed T=2 " + fmt(f) + ", mAug BOR T=4 " + fmt(b) + ", Bin BOR T=4 " + fmt(bb) + ", " +
                  fmt(seconds_since(start), 3) + " s"};
}

// 7. Power ordering and monotonicity on a BOR grid.
Outcome power_ordering() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> taus{0.0, 0.2, 0.4, 0.6, 0.8};
  RunOptions o;
  o.reps = 500;
  o.methods = {Method::bin, Method::maug};
  const auto pts = run_two_arm_power(preset("bor-T4"), taus, {}, o);
  bool ok = true;
  std::ostringstream detail;
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const auto& m = point(pts, taus[k], Method::maug);
    const auto& b = point(pts, taus[k], Method::bin);
    const double se = std::sqrt(m.std_error * m.std_error + b.std_error * b.std_error);
    if (taus[k] > 0 && m.power < b.power - 2 * se) ok = false;
    if (k > 0) {
      for (Method method : {Method::bin, Method::maug}) {
        const auto& cur = point(pts, taus[k], method);
        const auto& prev = point(pts, taus[k - 1], method);
        if (cur.power < prev.power - 2 * std::hypot(cur.std_error, prev.std_error)) ok = false;
      }
    }
    detail << "tau " << taus[k] << ": mAug " << fmt(m.power, 3) << " / Bin " << fmt(b.power, 3) << "; ";
  }
  detail << fmt(seconds_since(start), 3) << " s";
  return {ok, detail.str()};
}

// 8. mAug against eAugbin run time at four visits.
Outcome speedup() {
  const Scenario s = preset("fixed-T4-a15");
  const auto t = timing_probe(s, {Method::eaugbin, Method::maug}, 5, true);
  const double ratio = t[0].median_seconds / t[1].median_seconds;
  return {ratio >= 10.0, "median eAugbin " + fmt(t[0].median_seconds) + " s, mAug " + fmt(t[1].median_seconds) +
                             " s, ratio " + fmt(ratio, 3)};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. Byte-identical reruns of every command.
Outcome determinism() {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "augbin_acceptance";
  std::filesystem::create_directories(dir);
  const std::string cli = AUGBIN_CLI;
  const std::string data = std::string(AUGBIN_EXAMPLES) + "/fixed_t2.csv";
  const std::string config = std::string(AUGBIN_EXAMPLES) + "/fixed_t2.cfg";
  const std::map<std::string, std::string> commands{
      {"analyze", "analyze --data " + data + " --config " + config + " --method all --threads 2"},
      {"simulate", "simulate --preset fixed-T2-a15 --reps 20 --truth-patients 100000 --threads 2 --quiet"},
      {"power", "power --preset bor-T4 --tau-grid 0:0.4:0.2 --reps 10 --threads 2 --quiet"},
      {"permtest", "permtest --preset fixed-T2 --nperm 100 --seed 5 --threads 2"},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, args] : commands) {
    std::string out[2];
    for (int run = 0; run < 2; ++run) {
      const auto file = dir / (name + std::to_string(run) + ".out");
      const std::string cmd = cli + " " + args + " --out " + file.string() + " 2>/dev/null";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) {
        ok = false;
        detail += name + " exited with " + std::to_string(rc) + "; ";
      }
      out[run] = read_file(file);
    }
    const bool same = !out[0].empty() && out[0] == out[1];
    ok = ok && same;
    detail += name + (same ? " identical" : " DIFFERS") + "; ";
  }
  std::filesystem::remove_all(dir);
  return {ok, detail};
}

// 10. Invariants on 100 seeded datasets.
Outcome invariant_suite() {
  const auto start = std::chrono::steady_clock::now();
  int violations = 0;
  std::set<std::string> failed;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const bool two = seed % 5 == 0;
    const std::string name = two ? "bor-T4" : (seed % 2 ? "bor-T4-a25" : "fixed-T3-a15");
    const Scenario s = augbin::testing::seeded(name, 7000 + seed);
    TrialDataset data = generate(s, 0);
    // Round-trip through CSV.
    std::ostringstream a;
    write_csv(a, data);
    std::istringstream in(a.str());
    std::ostringstream b;
    write_csv(b, read_csv(in, {.max_visits = data.max_visits, .thresholds = data.thresholds}));
    if (a.str() != b.str()) ++violations, failed.insert("csv round-trip");
    // Observed classification.
    for (const auto& p : data.patients) {
      if (classify_bor(p, true) > classify_bor(p, false)) ++violations, failed.insert("observed confirmed <= unconfirmed");
    }
    // Fit and permutation invariance.
    AssembleOptions fo;
    fo.covariance = false;
    const auto fit = assemble(data, two, fo);
    TrialDataset shuffled = data;
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.patients.begin(), shuffled.patients.end(), rng);
    if ((assemble(shuffled, two, fo).theta - fit.theta).cwiseAbs().maxCoeff() > 1e-10) {
      ++violations, failed.insert("fit permutation invariance");
    }
    if (Eigen::LLT<Eigen::MatrixXd>(fit.tumour.cov).info() != Eigen::Success) ++violations, failed.insert("sigma PD");
    // Probability bounds and model-based confirmed <= unconfirmed.
    EndpointSpec bor = s.endpoint;
    bor.kind = EndpointKind::bor_unconfirmed;
    EndpointSpec confirmed = bor;
    confirmed.kind = EndpointKind::bor_confirmed;
    const auto pu = ResponseEvaluator(data, fit, bor, Method::maug).per_patient(fit.theta);
    const auto pc = ResponseEvaluator(data, fit, confirmed, Method::maug).per_patient(fit.theta);
    for (std::size_t i = 0; i < pu.size(); ++i) {
      if (!(pu[i] >= 0 && pu[i] <= 1 && pc[i] >= 0 && pc[i] <= 1)) ++violations, failed.insert("probability bounds");
      if (pc[i] > pu[i] + 1e-6) ++violations, failed.insert("model confirmed <= unconfirmed");
    }
  }
  std::string detail = std::to_string(violations) + " violations over 100 datasets";
  for (const auto& f : failed) detail += "; " + f;
  return {violations == 0, detail + ", " + fmt(seconds_since(start), 3) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"quadrature correctness", quadrature_correctness},
      {"oracle equivalence", oracle_equivalence},
      {"independence limit", independence_limit},
      {"single-arm fixed-time operating characteristics", [] { return single_arm_oc("fixed-T2-a15", 0.334, 0.925, 0.965, 0.10, 0.20); }},
      {"single-arm BOR operating characteristics", [] { return single_arm_oc("bor-T4-a15", 0.4, 0.93, 0.97, 0.11, 0.21); }},
      {"type I error", type_one_error},
      {"power ordering", power_ordering},
      {"speedup", speedup},
      {"determinism", determinism},
      {"invariant suite", invariant_suite},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << " (" << criteria[k].first << "): " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail << std::endl;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
