#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "augbin/infer.hpp"
#include "augbin/simharness.hpp"

namespace augbin {

/// Version written in the leading comment line of every CSV output.
inline constexpr int kCsvSchemaVersion = 1;

/// One line of analysis output: a response estimate or an arm comparison.
/// Fields that do not apply are NaN and written empty.
struct EstimateRow {
  std::string kind;  // "estimate" or "difference"
  std::string method;
  std::string endpoint;
  int time = 0;
  double estimate = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double statistic = 0.0;
  double p_value = 0.0;
};

EstimateRow estimate_row(const ResponseEstimate& e, const EndpointSpec& spec);
EstimateRow difference_row(const TestResult& t, const EndpointSpec& spec);

void write_estimates_csv(std::ostream& out, const std::vector<EstimateRow>& rows);
void write_estimates_json(std::ostream& out, const std::vector<EstimateRow>& rows);

/// One wide row per scenario: truth, then mean / coverage / width / width
/// reduction for each method.
void write_oc_csv(std::ostream& out, const std::vector<OperatingCharacteristics>& rows);
void write_replicates_csv(std::ostream& out, const OperatingCharacteristics& oc);
void write_power_csv(std::ostream& out, const std::string& scenario, const EndpointSpec& spec,
                     const std::vector<PowerPoint>& points);
void write_permutation_csv(std::ostream& out, const PermutationResult& result, Method method,
                           const EndpointSpec& spec);

/// key=value lines, one per entry.
void write_key_values(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& entries);

/// Shortest round-trip text; NaN becomes an empty field.
std::string csv_number(double v);

}  // namespace augbin
