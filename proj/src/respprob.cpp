#include "augbin/respprob.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "augbin/errors.hpp"
#include "augbin/normal.hpp"

namespace augbin {

using mvn::kInf;

void EndpointSpec::validate() const {
  if (horizon < 1) throw InvalidArgument("endpoint horizon must be at least 1");
  if (!(response < growth)) throw InvalidArgument("response threshold must lie below the growth threshold");
}

std::string to_string(EndpointKind kind) {
  switch (kind) {
    case EndpointKind::fixed_time: return "fixed";
    case EndpointKind::bor_unconfirmed: return "bor";
    case EndpointKind::bor_confirmed: return "bor-confirmed";
  }
  return "?";
}

std::string to_string(Method method) {
  switch (method) {
    case Method::bin: return "bin";
    case Method::eaugbin: return "eaugbin";
    case Method::maug: return "maug";
  }
  return "?";
}

EndpointKind parse_endpoint_kind(const std::string& text) {
  if (text == "fixed") return EndpointKind::fixed_time;
  if (text == "bor") return EndpointKind::bor_unconfirmed;
  if (text == "bor-confirmed") return EndpointKind::bor_confirmed;
  throw InvalidArgument("unknown endpoint '" + text + "' (expected fixed, bor or bor-confirmed)");
}

Method parse_method(const std::string& text) {
  if (text == "bin") return Method::bin;
  if (text == "eaugbin") return Method::eaugbin;
  if (text == "maug") return Method::maug;
  throw InvalidArgument("unknown method '" + text + "' (expected bin, eaugbin or maug)");
}

std::vector<ResponseTerm> response_terms(const EndpointSpec& spec) {
  spec.validate();
  const int T = spec.horizon;
  const double c = spec.response, g = spec.growth;
  std::vector<ResponseTerm> terms;
  auto blank = [T] { return mvn::Rectangle::full(T); };
  switch (spec.kind) {
    case EndpointKind::fixed_time: {
      ResponseTerm term{blank(), T};
      if (spec.intermediate == IntermediateBound::growth) term.region.upper.head(T - 1).setConstant(g);
      term.region.upper[T - 1] = c;
      terms.push_back(std::move(term));
      break;
    }
    case EndpointKind::bor_unconfirmed:
      for (int h = 1; h <= T; ++h) {
        ResponseTerm term{blank(), h};
        term.region.lower.head(h - 1).setConstant(c);
        term.region.upper.head(h - 1).setConstant(g);
        term.region.upper[h - 1] = c;
        terms.push_back(std::move(term));
      }
      break;
    case EndpointKind::bor_confirmed:
      for (int h = 1; h <= T - 1; ++h) {
        ResponseTerm term{blank(), h + 1};
        term.region.lower.head(h - 1).setConstant(c);
        term.region.upper.head(h - 1).setConstant(g);
        term.region.upper[h - 1] = c;
        term.region.upper[h] = c;
        terms.push_back(std::move(term));
      }
      break;
  }
  return terms;
}

int observed_response(const PatientRecord& p, const EndpointSpec& spec) {
  const Thresholds th = spec.thresholds();
  if (spec.kind == EndpointKind::fixed_time) {
    const auto rule = spec.intermediate == IntermediateBound::growth ? FixedTimeRule::no_progression
                                                                     : FixedTimeRule::literal;
    return classify_fixed(p, spec.horizon, th, rule);
  }
  PatientRecord head = p;
  if (head.last_observed() > spec.horizon) {
    head.sizes.resize(spec.horizon);
    head.new_lesion.resize(spec.horizon);
  }
  return classify_bor(head, spec.kind == EndpointKind::bor_confirmed, th);
}

namespace {

ResponseEvaluator::Patient compact(const PatientRecord& p) {
  ResponseEvaluator::Patient out;
  out.baseline = p.baseline;
  out.arm = p.arm_or_zero();
  out.last_observed = p.last_observed();
  out.y = log_ratios(p);
  out.sizes.reserve(p.sizes.size() + 1);
  out.sizes.push_back(p.baseline);
  out.sizes.insert(out.sizes.end(), p.sizes.begin(), p.sizes.end());
  return out;
}

int bounded_dims(const mvn::Rectangle& r) {
  int n = 0;
  for (Eigen::Index i = 0; i < r.dim(); ++i) n += (std::isfinite(r.lower[i]) || std::isfinite(r.upper[i])) ? 1 : 0;
  return n;
}

int last_bounded(const mvn::Rectangle& r) {
  int last = 0;
  for (Eigen::Index i = 0; i < r.dim(); ++i) {
    if (std::isfinite(r.lower[i]) || std::isfinite(r.upper[i])) last = static_cast<int>(i) + 1;
  }
  return last;
}

/// Number of coordinates y_1..y_D an eAugbin term integrates over.
int integration_dims(const ResponseTerm& term) { return std::max(last_bounded(term.region), term.survival_visits - 1); }

double chebyshev_node(int k, int K) { return std::cos((2.0 * k + 1.0) * std::numbers::pi / (2.0 * K)); }

double chebyshev_eval(const std::vector<double>& f, double x) {
  const int K = static_cast<int>(f.size());
  if (K == 1) return f[0];
  double num = 0.0, den = 0.0;
  for (int k = 0; k < K; ++k) {
    const double xk = chebyshev_node(k, K);
    const double diff = x - xk;
    if (std::abs(diff) < 1e-15) return f[k];
    const double w = ((k % 2) ? -1.0 : 1.0) * std::sin((2.0 * k + 1.0) * std::numbers::pi / (2.0 * K)) / diff;
    num += w * f[k];
    den += w;
  }
  return num / den;
}

/// Smallest node count whose Chebyshev interpolation error bound for a
/// normal-type function of scale sigma over a half-width w is below tol.
int chebyshev_nodes_needed(double w, double sigma, double tol) {
  if (!(w > 0.0)) return 1;
  const double ratio = w / sigma;
  double log_fact = 0.0;
  for (int k = 1; k <= 24; ++k) {
    log_fact += std::log(static_cast<double>(k));
    const double log_bound = k * std::log(ratio) - (k - 1) * std::log(2.0) - 0.5 * log_fact;
    if (log_bound < std::log(tol)) return k;
  }
  return 25;
}

bool in_phi(double y, double lo, double hi, double growth) {
  return y >= lo && (y < hi || (y == hi && hi == growth));
}

}  // namespace

ResponseEvaluator::ResponseEvaluator(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec,
                                     Method method, const QuadratureSettings& settings)
    : ResponseEvaluator(data, data.patients, model, spec, method, settings) {}

ResponseEvaluator::ResponseEvaluator(const TrialDataset& data, const std::vector<PatientRecord>& targets,
                                     const FittedModel& model, const EndpointSpec& spec, Method method,
                                     const QuadratureSettings& settings)
    : spec_(spec), method_(method), settings_(settings), layout_(model.layout), theta_(model.theta) {
  spec_.validate();
  if (method_ != Method::bin && spec_.horizon > layout_.visits) {
    throw InvalidArgument("endpoint horizon " + std::to_string(spec_.horizon) + " exceeds the fitted follow-up " +
                          std::to_string(layout_.visits));
  }
  if (targets.empty()) throw InvalidArgument("no patients to average over");
  for (const auto& p : targets) {
    pts_.push_back(compact(p));
    observed_.push_back(observed_response(p, spec_));
  }
  for (const auto& p : data.patients) cohort_.push_back(compact(p));
  terms_ = response_terms(spec_);
  if (method_ == Method::bin) return;

  const int T = spec_.horizon;
  const TumourModel& tumour = model.tumour;
  const Eigen::MatrixXd cov = tumour.cov.topLeftCorner(T, T);
  double zmin = kInf, zmax = -kInf;
  std::set<double> distinct;
  for (const auto& p : pts_) {
    zmin = std::min(zmin, p.baseline);
    zmax = std::max(zmax, p.baseline);
    distinct.insert(p.baseline);
  }
  const double half_width = 0.5 * std::abs(tumour.baseline_slope) * (zmax - zmin);
  const Eigen::VectorXd mid_mean =
      tumour.intercepts.head(T).array() + tumour.baseline_slope * 0.5 * (zmin + zmax);
  mvn::QmcOptions qmc;
  qmc.abs_tol = settings_.abs_tol;
  qmc.max_samples = settings_.max_samples;
  qmc.shifts = settings_.shifts;
  qmc.seed = settings_.seed;

  const std::vector<int> arms = layout_.two_arm ? std::vector<int>{0, 1} : std::vector<int>{0};
  for (const auto& term : terms_) {
    TermPlan tp;
    if (method_ == Method::maug) {
      mvn::mvn_rect_prob({mid_mean, cov}, term.region, qmc, &tp.plan);
      if (bounded_dims(term.region) > 2) {
        double sigma = kInf;
        for (int t = 0; t < T; ++t) {
          if (std::isfinite(term.region.lower[t]) || std::isfinite(term.region.upper[t])) {
            sigma = std::min(sigma, std::sqrt(cov(t, t)));
          }
        }
        const int K = chebyshev_nodes_needed(half_width, sigma, settings_.interpolation_tol);
        tp.nodes = K < static_cast<int>(distinct.size()) ? K : 0;
      }
    } else {
      const int D = integration_dims(term);
      const mvn::Rectangle rect{term.region.lower.head(D), term.region.upper.head(D)};
      tp.orders.resize(pts_.size() * 2);
      for (std::size_t i = 0; i < pts_.size(); ++i) {
        for (int r : arms) {
          const Eigen::VectorXd mu = tumour.mean_for(pts_[i].baseline, r).head(D);
          tp.orders[i * 2 + r] = mvn::genz_order({mu, cov.topLeftCorner(D, D)}, rect);
        }
      }
    }
    plans_.push_back(std::move(tp));
  }

  if (method_ == Method::maug) {
    base_curves_ = curves(theta_, arms);
    const ProgressionModel prog = unpack_progression(layout_, theta_);
    std::vector<std::string> notes;
    for (std::size_t k = 0; k < terms_.size(); ++k)
      for (int r : arms) trimmed_hazards(prog, static_cast<int>(k), r, &notes);
    for (auto& n : notes) {
      if (std::find(warnings_.begin(), warnings_.end(), n) == warnings_.end()) warnings_.push_back(std::move(n));
    }
  }
}

std::vector<std::vector<ResponseEvaluator::TermCurve>> ResponseEvaluator::curves(const Eigen::VectorXd& theta,
                                                                                 const std::vector<int>& arms) const {
  const int T = spec_.horizon;
  const TumourModel tumour = unpack_tumour(layout_, theta);
  const Eigen::MatrixXd cov = tumour.cov.topLeftCorner(T, T);
  const double b = tumour.baseline_slope;
  double lo = kInf, hi = -kInf;
  for (const auto& p : pts_) {
    lo = std::min(lo, b * p.baseline);
    hi = std::max(hi, b * p.baseline);
  }
  std::vector<std::vector<TermCurve>> out(2);
  for (int r : arms) {
    Eigen::VectorXd base = tumour.intercepts.head(T);
    if (layout_.two_arm && r == 1) base += tumour.arm_effects.head(T);
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const auto& tp = plans_[k];
      auto eval = [&](double s) {
        const Eigen::VectorXd mu = base.array() + s;
        return mvn::mvn_rect_prob({mu, cov}, terms_[k].region, tp.plan).probability;
      };
      TermCurve c;
      if (tp.nodes == 0) {
        c.values.reserve(pts_.size());
        for (const auto& p : pts_) c.values.push_back(eval(b * p.baseline));
      } else {
        c.interpolated = true;
        c.lo = lo;
        c.hi = hi;
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (int j = 0; j < tp.nodes; ++j) c.values.push_back(eval(mid + half * chebyshev_node(j, tp.nodes)));
      }
      out[r].push_back(std::move(c));
    }
  }
  return out;
}

std::vector<double> ResponseEvaluator::trimmed_hazards(const ProgressionModel& prog, int term, int arm,
                                                       std::vector<std::string>* warnings) const {
  const auto& region = terms_[term].region;
  const int L = terms_[term].survival_visits;
  std::vector<double> out(L);
  for (int t = 1; t <= L; ++t) {
    double lo = region.lower[t - 1], hi = region.upper[t - 1];
    if (!std::isfinite(lo) && !std::isfinite(hi)) hi = spec_.growth;
    double sum = 0.0;
    int count = 0;
    for (const auto& p : cohort_) {
      if (p.last_observed >= t && in_phi(p.y[t - 1], lo, hi, spec_.growth)) {
        sum += prog.probability(t, p.sizes[t - 1], arm);
        ++count;
      }
    }
    if (count == 0) {
      if (warnings) {
        warnings->push_back("all patients at risk at visit " + std::to_string(t) +
                            " lie outside the integration region; untrimmed mean hazard used");
      }
      for (int need : {t, t - 1}) {
        for (const auto& p : cohort_) {
          if (p.last_observed >= need) {
            sum += prog.probability(t, p.sizes[t - 1], arm);
            ++count;
          }
        }
        if (count > 0) break;
      }
    }
    out[t - 1] = count > 0 ? sum / count : 0.0;
  }
  return out;
}

std::vector<double> ResponseEvaluator::maug(const Eigen::VectorXd& theta, std::optional<int> forced_arm) const {
  std::vector<int> arms;
  if (forced_arm) {
    arms = {*forced_arm};
  } else {
    arms = layout_.two_arm ? std::vector<int>{0, 1} : std::vector<int>{0};
  }
  const int q = layout_.mvn_size();
  const bool same_mvn = theta.head(q) == theta_.head(q);
  const auto fresh = same_mvn ? std::vector<std::vector<TermCurve>>{} : curves(theta, arms);
  const auto& crv = same_mvn ? base_curves_ : fresh;
  const ProgressionModel prog = unpack_progression(layout_, theta);
  const double b = theta[layout_.slope()];

  std::vector<std::vector<std::vector<double>>> trimmed(terms_.size(), std::vector<std::vector<double>>(2));
  for (std::size_t k = 0; k < terms_.size(); ++k)
    for (int r : arms) trimmed[k][r] = trimmed_hazards(prog, static_cast<int>(k), r, nullptr);

  std::vector<double> out(pts_.size());
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    const auto& p = pts_[i];
    const int r = forced_arm.value_or(p.arm);
    const double s = b * p.baseline;
    double total = 0.0;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const TermCurve& c = crv[r][k];
      double rect;
      if (!c.interpolated) {
        rect = c.values[i];
      } else {
        const double half = 0.5 * (c.hi - c.lo);
        rect = half > 0.0 ? chebyshev_eval(c.values, (s - 0.5 * (c.lo + c.hi)) / half) : c.values[0];
      }
      double survival = 1.0;
      for (int t = 1; t <= terms_[k].survival_visits; ++t) {
        const double hazard =
            t - 1 <= p.last_observed ? prog.probability(t, p.sizes[t - 1], r) : trimmed[k][r][t - 1];
        survival *= 1.0 - hazard;
      }
      total += survival * std::clamp(rect, 0.0, 1.0);
    }
    out[i] = std::clamp(total, 0.0, 1.0);
  }
  return out;
}

std::vector<double> ResponseEvaluator::eaugbin(const Eigen::VectorXd& theta, std::optional<int> forced_arm) const {
  const int T = spec_.horizon;
  const TumourModel tumour = unpack_tumour(layout_, theta);
  const ProgressionModel prog = unpack_progression(layout_, theta);
  std::vector<double> out(pts_.size());
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    const auto& p = pts_[i];
    const int r = forced_arm.value_or(p.arm);
    const Eigen::VectorXd mu = tumour.mean_for(p.baseline, r).head(T);
    double total = 0.0;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const auto& term = terms_[k];
      const int D = integration_dims(term);
      const int L = term.survival_visits;
      const mvn::SequentialConditioner cond({mu.head(D), tumour.cov.topLeftCorner(D, D)},
                                            {term.region.lower.head(D), term.region.upper.head(D)},
                                            plans_[k].orders[i * 2 + r]);
      const double z0 = p.baseline;
      auto survival = [&](std::span<const double> y) {
        double s = 1.0;
        for (int t = 1; t <= L; ++t) {
          const double prev = t == 1 ? z0 : z0 * std::exp(y[t - 2]);
          s *= 1.0 - prog.probability(t, prev, r);
        }
        return s;
      };
      total += mvn::mvn_rect_integral(cond, survival, settings_.eaugbin_points_per_shift, settings_.eaugbin_shifts,
                                      settings_.seed)
                   .probability;
    }
    out[i] = std::clamp(total, 0.0, 1.0);
  }
  return out;
}

std::vector<double> ResponseEvaluator::per_patient(const Eigen::VectorXd& theta, std::optional<int> forced_arm) const {
  if (method_ != Method::bin && theta.size() != layout_.size()) throw InvalidArgument("theta has the wrong length");
  if (forced_arm && (*forced_arm < 0 || *forced_arm > (layout_.two_arm ? 1 : 0))) {
    throw InvalidArgument("forced arm is not part of the fitted model");
  }
  switch (method_) {
    case Method::bin: return {observed_.begin(), observed_.end()};
    case Method::maug: return maug(theta, forced_arm);
    case Method::eaugbin: return eaugbin(theta, forced_arm);
  }
  return {};
}

double ResponseEvaluator::mean(const Eigen::VectorXd& theta, std::optional<int> forced_arm) const {
  if (method_ == Method::bin && forced_arm) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      if (pts_[i].arm == *forced_arm) {
        sum += observed_[i];
        ++count;
      }
    }
    if (count == 0) throw InvalidArgument("no patients in arm " + std::to_string(*forced_arm));
    return sum / count;
  }
  const auto probs = per_patient(theta, forced_arm);
  double sum = 0.0;
  for (double v : probs) sum += v;
  return sum / static_cast<double>(probs.size());
}

std::vector<int> ResponseEvaluator::arms() const {
  std::vector<int> out;
  out.reserve(pts_.size());
  for (const auto& p : pts_) out.push_back(p.arm);
  return out;
}

double ResponseEvaluator::difference(const Eigen::VectorXd& theta) const {
  if (method_ != Method::bin && !layout_.two_arm) throw InvalidArgument("arm difference needs a two-arm model");
  return mean(theta, 1) - mean(theta, 0);
}

namespace {

double single_patient(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                      const TrialDataset* data, Method method, const QuadratureSettings& settings) {
  TrialDataset own;
  if (!data) {
    own.patients = {patient};
    own.max_visits = model.layout.visits;
    data = &own;
  }
  const ResponseEvaluator ev(*data, {patient}, model, spec, method, settings);
  return ev.mean(model.theta);
}

void require_kind(const EndpointSpec& spec, bool fixed) {
  if ((spec.kind == EndpointKind::fixed_time) != fixed) {
    throw InvalidArgument(fixed ? "a fixed-time endpoint is required" : "a best-observed-response endpoint is required");
  }
}

}  // namespace

double prob_fixed_eaugbin(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                          const QuadratureSettings& settings) {
  require_kind(spec, true);
  return single_patient(patient, model, spec, nullptr, Method::eaugbin, settings);
}

double prob_bor_eaugbin(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                        const QuadratureSettings& settings) {
  require_kind(spec, false);
  return single_patient(patient, model, spec, nullptr, Method::eaugbin, settings);
}

double prob_fixed_maug(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                       const TrialDataset& data, const QuadratureSettings& settings) {
  require_kind(spec, true);
  return single_patient(patient, model, spec, &data, Method::maug, settings);
}

double prob_bor_maug(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                     const TrialDataset& data, const QuadratureSettings& settings) {
  require_kind(spec, false);
  return single_patient(patient, model, spec, &data, Method::maug, settings);
}

double mean_response(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec, Method method,
                     const QuadratureSettings& settings) {
  return ResponseEvaluator(data, model, spec, method, settings).mean(model.theta);
}

double arm_difference(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec, Method method,
                      const QuadratureSettings& settings) {
  return ResponseEvaluator(data, model, spec, method, settings).difference(model.theta);
}

}  // namespace augbin
