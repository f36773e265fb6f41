#pragma once

#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace augbin {

/// Dichotomization thresholds on the log tumour-size-ratio scale.
struct Thresholds {
  double response = std::log(0.7);  // responder when y < response
  double growth = std::log(1.2);    // tumour-growth progression when y > growth
};

enum class ProgressionCause { none, new_lesion, tumour_growth };

struct Progression {
  ProgressionCause cause = ProgressionCause::none;
  int visit = 0;  // 0 when cause == none
};

/// One patient's follow-up. Visits 1..F are stored densely; visits after the
/// last observed one are structurally absent.
struct PatientRecord {
  std::string id;
  std::optional<int> arm;      // 0 control, 1 experimental; empty in single-arm trials
  double baseline = 0.0;       // z0, mm
  std::vector<double> sizes;   // z_t for t = 1..F
  std::vector<int> new_lesion; // D_t for t = 1..F

  int last_observed() const { return static_cast<int>(sizes.size()); }
  int arm_or_zero() const { return arm.value_or(0); }
  /// Size at visit t (t = 0 is baseline); requires t <= F.
  double size_at(int t) const { return t == 0 ? baseline : sizes[static_cast<std::size_t>(t - 1)]; }
};

struct TrialDataset {
  std::vector<PatientRecord> patients;
  int max_visits = 0;  // T
  Thresholds thresholds;

  bool two_arm() const;
  std::size_t arm_count(int arm) const;
};

/// y_t = log(z_t / z0), t = 1..F.
std::vector<double> log_ratios(const PatientRecord& p);

Progression detect_progression(const PatientRecord& p, const Thresholds& th = {});

enum class FixedTimeRule {
  literal,        // no new lesions through t and y_t below threshold
  no_progression  // additionally no tumour-growth progression before t
};

int classify_fixed(const PatientRecord& p, int t, const Thresholds& th = {},
                   FixedTimeRule rule = FixedTimeRule::literal);

int classify_bor(const PatientRecord& p, bool confirmation, const Thresholds& th = {});

/// Throws ValidationError naming the first violated invariant.
void validate(const PatientRecord& p, const TrialDataset& context);
void validate(const TrialDataset& data);

/// Dataset-level settings kept outside the CSV (sidecar key=value file).
struct DatasetConfig {
  std::optional<int> max_visits;
  Thresholds thresholds;
};

DatasetConfig load_config(const std::filesystem::path& path);
DatasetConfig parse_config(std::istream& in);

TrialDataset read_csv(std::istream& in, const DatasetConfig& config = {});
TrialDataset load_csv(const std::filesystem::path& path, const DatasetConfig& config = {});
void write_csv(std::ostream& out, const TrialDataset& data);

/// Shortest text that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace augbin
