#include "augbin/trialdata.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "augbin/errors.hpp"

namespace augbin {

bool TrialDataset::two_arm() const {
  return !patients.empty() && patients.front().arm.has_value();
}

std::size_t TrialDataset::arm_count(int arm) const {
  return static_cast<std::size_t>(
      std::count_if(patients.begin(), patients.end(), [arm](const PatientRecord& p) { return p.arm == arm; }));
}

std::vector<double> log_ratios(const PatientRecord& p) {
  if (!(p.baseline > 0.0)) throw ValidationError("patient " + p.id + ": baseline size must be positive");
  std::vector<double> y;
  y.reserve(p.sizes.size());
  for (double z : p.sizes) {
    if (!(z > 0.0)) throw ValidationError("patient " + p.id + ": tumour sizes must be positive");
    y.push_back(std::log(z / p.baseline));
  }
  return y;
}

Progression detect_progression(const PatientRecord& p, const Thresholds& th) {
  const auto y = log_ratios(p);
  for (int t = 1; t <= p.last_observed(); ++t) {
    // A new lesion at the same visit as excess growth counts as new-lesion progression.
    if (p.new_lesion[t - 1] == 1) return {ProgressionCause::new_lesion, t};
    if (y[t - 1] > th.growth) return {ProgressionCause::tumour_growth, t};
  }
  return {};
}

int classify_fixed(const PatientRecord& p, int t, const Thresholds& th, FixedTimeRule rule) {
  if (t < 1 || t > p.last_observed()) return 0;
  const auto y = log_ratios(p);
  for (int j = 1; j <= t; ++j) {
    if (p.new_lesion[j - 1] == 1) return 0;
    if (rule == FixedTimeRule::no_progression && j < t && y[j - 1] > th.growth) return 0;
  }
  return y[t - 1] < th.response ? 1 : 0;
}

int classify_bor(const PatientRecord& p, bool confirmation, const Thresholds& th) {
  const auto y = log_ratios(p);
  int run = 0;
  for (int t = 1; t <= p.last_observed(); ++t) {
    if (p.new_lesion[t - 1] == 1 || y[t - 1] > th.growth) break;
    if (y[t - 1] < th.response) {
      ++run;
      if (!confirmation || run >= 2) return 1;
    } else {
      run = 0;
    }
  }
  return 0;
}

void validate(const PatientRecord& p, const TrialDataset& context) {
  const std::string who = "patient " + p.id + ": ";
  if (!(p.baseline > 0.0) || !std::isfinite(p.baseline)) throw ValidationError(who + "baseline size must be positive");
  if (p.sizes.size() != p.new_lesion.size()) throw ValidationError(who + "sizes and new-lesion indicators differ in length");
  if (context.max_visits > 0 && p.last_observed() > context.max_visits) {
    throw ValidationError(who + "more visits than the maximum follow-up " + std::to_string(context.max_visits));
  }
  if (p.arm && *p.arm != 0 && *p.arm != 1) throw ValidationError(who + "arm must be 0 or 1");
  for (std::size_t t = 0; t < p.sizes.size(); ++t) {
    if (!(p.sizes[t] > 0.0) || !std::isfinite(p.sizes[t])) throw ValidationError(who + "tumour sizes must be positive");
    if (p.new_lesion[t] != 0 && p.new_lesion[t] != 1) throw ValidationError(who + "new_lesion must be 0 or 1");
    if (p.new_lesion[t] == 1 && t + 1 != p.sizes.size()) {
      throw ValidationError(who + "records continue after new-lesion progression");
    }
  }
}

void validate(const TrialDataset& data) {
  if (data.max_visits < 1) throw ValidationError("maximum follow-up must be at least 1");
  if (!(data.thresholds.response < data.thresholds.growth)) {
    throw ValidationError("response threshold must lie below the growth threshold");
  }
  const bool two = data.two_arm();
  for (const auto& p : data.patients) {
    if (p.arm.has_value() != two) throw ValidationError("arm must be given for every patient or for none");
    validate(p, data);
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, std::size_t row, std::size_t col) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) throw ParseError(row, col, "expected a number, got '" + s + "'");
  return v;
}

long parse_int(const std::string& s, std::size_t row, std::size_t col) {
  long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) throw ParseError(row, col, "expected an integer, got '" + s + "'");
  return v;
}

}  // namespace

DatasetConfig parse_config(std::istream& in) {
  DatasetConfig cfg;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(row, 1, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "max_visits" || key == "T") {
      cfg.max_visits = static_cast<int>(parse_int(value, row, eq + 2));
    } else if (key == "response_threshold") {
      cfg.thresholds.response = parse_double(value, row, eq + 2);
    } else if (key == "growth_threshold") {
      cfg.thresholds.growth = parse_double(value, row, eq + 2);
    } else if (key == "response_ratio") {
      cfg.thresholds.response = std::log(parse_double(value, row, eq + 2));
    } else if (key == "growth_ratio") {
      cfg.thresholds.growth = std::log(parse_double(value, row, eq + 2));
    } else {
      throw ParseError(row, 1, "unknown key '" + key + "'");
    }
  }
  return cfg;
}

DatasetConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  return parse_config(in);
}

TrialDataset read_csv(std::istream& in, const DatasetConfig& config) {
  TrialDataset data;
  data.thresholds = config.thresholds;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  int arm_mode = -1;  // -1 unknown, 0 absent, 1 present
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto f = split(line, ',');
    if (!header_seen) {
      const std::vector<std::string> expected{"patient_id", "arm", "visit", "size_mm", "new_lesion"};
      if (f != expected) throw ParseError(row, 1, "header must be patient_id,arm,visit,size_mm,new_lesion");
      header_seen = true;
      continue;
    }
    if (f.size() != 5) throw ParseError(row, std::min<std::size_t>(f.size(), 5) + 1, "expected 5 fields");
    const std::string& id = f[0];
    if (id.empty()) throw ParseError(row, 1, "empty patient_id");
    std::optional<int> arm;
    if (!f[1].empty()) arm = static_cast<int>(parse_int(f[1], row, 2));
    const int mode = arm ? 1 : 0;
    if (arm_mode == -1) arm_mode = mode;
    if (mode != arm_mode) throw ValidationError("row " + std::to_string(row) + ": arm must be given on every row or on none");
    if (arm && *arm != 0 && *arm != 1) throw ValidationError("row " + std::to_string(row) + ": arm must be 0 or 1");
    const long visit = parse_int(f[2], row, 3);
    const double size = parse_double(f[3], row, 4);
    const long lesion = parse_int(f[4], row, 5);
    if (!(size > 0.0)) throw ValidationError("row " + std::to_string(row) + ": size_mm must be positive");
    if (lesion != 0 && lesion != 1) throw ValidationError("row " + std::to_string(row) + ": new_lesion must be 0 or 1");

    auto it = index.find(id);
    if (it == index.end()) {
      if (visit != 0) throw ValidationError("row " + std::to_string(row) + ": first record of patient " + id + " must be the baseline visit 0");
      if (lesion != 0) throw ValidationError("row " + std::to_string(row) + ": new_lesion must be 0 at baseline");
      index.emplace(id, data.patients.size());
      PatientRecord p;
      p.id = id;
      p.arm = arm;
      p.baseline = size;
      data.patients.push_back(std::move(p));
      continue;
    }
    PatientRecord& p = data.patients[it->second];
    if (p.arm != arm) throw ValidationError("row " + std::to_string(row) + ": patient " + id + " changes arm");
    if (!p.new_lesion.empty() && p.new_lesion.back() == 1) {
      throw ValidationError("row " + std::to_string(row) + ": record after new-lesion progression for patient " + id);
    }
    if (visit != p.last_observed() + 1) {
      throw ValidationError("row " + std::to_string(row) + ": visits of patient " + id + " must be consecutive");
    }
    p.sizes.push_back(size);
    p.new_lesion.push_back(static_cast<int>(lesion));
  }
  if (!header_seen) throw ParseError(row + 1, 1, "missing header");
  int longest = 0;
  for (const auto& p : data.patients) longest = std::max(longest, p.last_observed());
  data.max_visits = config.max_visits.value_or(std::max(longest, 1));
  validate(data);
  return data;
}

TrialDataset load_csv(const std::filesystem::path& path, const DatasetConfig& config) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open data file " + path.string());
  return read_csv(in, config);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const TrialDataset& data) {
  out << "patient_id,arm,visit,size_mm,new_lesion\n";
  for (const auto& p : data.patients) {
    const std::string arm = p.arm ? std::to_string(*p.arm) : std::string();
    out << p.id << ',' << arm << ",0," << format_double(p.baseline) << ",0\n";
    for (int t = 1; t <= p.last_observed(); ++t) {
      out << p.id << ',' << arm << ',' << t << ',' << format_double(p.sizes[t - 1]) << ',' << p.new_lesion[t - 1] << '\n';
    }
  }
}

}  // namespace augbin
