#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "augbin/modelfit.hpp"
#include "augbin/mvnquad.hpp"
#include "augbin/trialdata.hpp"

namespace augbin {

enum class EndpointKind { fixed_time, bor_unconfirmed, bor_confirmed };

/// Bound applied to intermediate visits of the fixed-time endpoint.
enum class IntermediateBound { unbounded, growth };

struct EndpointSpec {
  EndpointKind kind = EndpointKind::fixed_time;
  int horizon = 1;  // T
  double response = std::log(0.7);
  double growth = std::log(1.2);
  IntermediateBound intermediate = IntermediateBound::unbounded;

  Thresholds thresholds() const { return {response, growth}; }
  /// Throws InvalidArgument unless response < growth and horizon >= 1.
  void validate() const;
};

enum class Method { bin, eaugbin, maug };

std::string to_string(EndpointKind kind);
std::string to_string(Method method);
EndpointKind parse_endpoint_kind(const std::string& text);  // fixed | bor | bor-confirmed
Method parse_method(const std::string& text);                // bin | eaugbin | maug

/// One disjoint piece of the response event: the rectangle for y_1..y_T and
/// the visits whose new-lesion survival enters the product.
struct ResponseTerm {
  mvn::Rectangle region;
  int survival_visits = 0;
};

/// Fixed time: a single term. BOR: one term per visit h at which the first
/// response is seen (confirmed: first of two consecutive responses).
std::vector<ResponseTerm> response_terms(const EndpointSpec& spec);

/// Binary classification of one patient's observed record for the endpoint.
int observed_response(const PatientRecord& p, const EndpointSpec& spec);

struct QuadratureSettings {
  double abs_tol = 1e-5;                       // rectangle probabilities
  std::size_t max_samples = std::size_t{1} << 20;
  int shifts = 12;
  std::uint64_t seed = mvn::kDefaultSeed;
  std::size_t eaugbin_points_per_shift = 4096;  // 16 x 4096 = 2^16 lattice points
  int eaugbin_shifts = 16;
  double interpolation_tol = 1e-7;             // shift-interpolation error bound
};

/// Evaluates trial-mean response probabilities as functions of theta for one
/// dataset, endpoint and method. Quadrature plans (variable order, lattice
/// size, seeds, interpolation nodes) are frozen at the fitted theta so nearby
/// evaluations share their random numbers. Instances are immutable after
/// construction and safe to use from several threads.
class ResponseEvaluator {
 public:
  ResponseEvaluator(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec, Method method,
                    const QuadratureSettings& settings = {});
  /// Averages over `targets` instead of the dataset's own patients; the
  /// dataset still supplies the trimmed hazards.
  ResponseEvaluator(const TrialDataset& data, const std::vector<PatientRecord>& targets, const FittedModel& model,
                    const EndpointSpec& spec, Method method, const QuadratureSettings& settings = {});

  /// Per-patient probabilities; forced_arm overrides every patient's arm.
  std::vector<double> per_patient(const Eigen::VectorXd& theta, std::optional<int> forced_arm = std::nullopt) const;
  double mean(const Eigen::VectorXd& theta, std::optional<int> forced_arm = std::nullopt) const;
  /// Mean with every patient in the experimental arm minus mean with every
  /// patient in the control arm.
  double difference(const Eigen::VectorXd& theta) const;

  const Eigen::VectorXd& theta() const { return theta_; }
  Method method() const { return method_; }
  const EndpointSpec& endpoint() const { return spec_; }
  std::size_t patients() const { return pts_.size(); }
  const std::vector<int>& observed() const { return observed_; }
  std::vector<int> arms() const;
  const std::vector<std::string>& warnings() const { return warnings_; }

  struct Patient {
    double baseline = 0.0;
    int arm = 0;
    int last_observed = 0;
    std::vector<double> y;      // log ratios, visits 1..F
    std::vector<double> sizes;  // z_0..z_F
  };

  /// Rectangle probability of one term as a function of the shift b * z0.
  struct TermCurve {
    bool interpolated = false;
    std::vector<double> values;  // per node or per patient
    double lo = 0.0, hi = 0.0;
  };

  struct TermPlan {
    mvn::IntegrationPlan plan;  // rectangle probability (mAug)
    int nodes = 0;              // 0: evaluate per patient
    std::vector<std::vector<int>> orders;  // eAugbin conditioner order per patient and arm
  };

 private:
  std::vector<std::vector<TermCurve>> curves(const Eigen::VectorXd& theta, const std::vector<int>& arms) const;
  std::vector<double> maug(const Eigen::VectorXd& theta, std::optional<int> forced_arm) const;
  std::vector<double> eaugbin(const Eigen::VectorXd& theta, std::optional<int> forced_arm) const;
  std::vector<double> trimmed_hazards(const ProgressionModel& prog, int term, int arm,
                                      std::vector<std::string>* warnings) const;

  EndpointSpec spec_;
  Method method_;
  QuadratureSettings settings_;
  ParameterLayout layout_;
  Eigen::VectorXd theta_;
  std::vector<Patient> pts_;     // patients averaged over
  std::vector<Patient> cohort_;  // patients defining the trimmed hazards
  std::vector<ResponseTerm> terms_;
  std::vector<TermPlan> plans_;
  std::vector<std::vector<TermCurve>> base_curves_;  // per arm, per term at theta_
  std::vector<int> observed_;                          // binary outcomes for the bin method
  std::vector<std::string> warnings_;
};

/// Single-patient engines. The mAug versions need the dataset for the trimmed
/// hazards of visits after the patient's last observation.
double prob_fixed_eaugbin(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                          const QuadratureSettings& settings = {});
double prob_bor_eaugbin(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                        const QuadratureSettings& settings = {});
double prob_fixed_maug(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                       const TrialDataset& data, const QuadratureSettings& settings = {});
double prob_bor_maug(const PatientRecord& patient, const FittedModel& model, const EndpointSpec& spec,
                     const TrialDataset& data, const QuadratureSettings& settings = {});

double mean_response(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec, Method method,
                     const QuadratureSettings& settings = {});
double arm_difference(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec, Method method,
                      const QuadratureSettings& settings = {});

}  // namespace augbin
