#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "augbin/respprob.hpp"

namespace augbin {

/// Data-generating setting for simulated trials.
///
/// Arm means are mean_base + delta * tau * tau_coef + psi * psi_coef with
/// delta = +1 for the control arm (0) and -1 for the experimental arm (1);
/// single-arm scenarios use mean_base alone.
struct Scenario {
  std::string name;
  int arms = 1;
  int n = 75;  // per arm
  int visits = 2;
  Eigen::VectorXd mean_base;
  Eigen::VectorXd tau_coef;
  Eigen::VectorXd psi_coef;
  Eigen::MatrixXd cov;
  double alpha = -1.5;  // new-lesion intercept; -inf disables new lesions
  double gamma = 0.0;   // effect of the previous tumour size
  double beta = 0.0;    // experimental-arm effect on new lesions
  double tau = 0.0;
  double psi = 0.0;
  double baseline_lower = 0.0;
  double baseline_upper = 1.0;
  /// Remove visits after tumour-growth progression as well as after new lesions.
  bool growth_censoring = true;
  EndpointSpec endpoint;
  std::uint64_t seed = 1;

  Eigen::VectorXd arm_mean(int arm) const;
  /// Throws ValidationError on an inconsistent or degenerate setting.
  void validate() const;
};

Scenario parse_scenario(std::istream& in);
Scenario load_scenario(const std::filesystem::path& path);
void write_scenario(std::ostream& out, const Scenario& s);

std::vector<std::string> preset_names();
/// Throws InvalidArgument for an unknown name.
Scenario preset(const std::string& name);

}  // namespace augbin
