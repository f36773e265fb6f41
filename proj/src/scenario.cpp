#include "augbin/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>

#include "augbin/errors.hpp"

namespace augbin {

namespace detail {
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_presets();
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& text, std::size_t row) {
  const std::string t = trim(text);
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  if (t == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(row, 1, "expected a number, got '" + t + "'");
  }
  return v;
}

long to_int(const std::string& text, std::size_t row) {
  const std::string t = trim(text);
  long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(row, 1, "expected an integer, got '" + t + "'");
  }
  return v;
}

Eigen::VectorXd to_vector(const std::string& text, std::size_t row) {
  std::string t = text;
  for (char& c : t)
    if (c == ',') c = ' ';
  std::istringstream in(t);
  std::vector<double> values;
  std::string token;
  while (in >> token) values.push_back(to_double(token, row));
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::MatrixXd to_matrix(const std::string& text, std::size_t row) {
  std::vector<Eigen::VectorXd> rows;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find(';', start);
    const std::string piece = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!trim(piece).empty()) rows.push_back(to_vector(piece, row));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  const auto r = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (rows[i].size() != r) throw ParseError(row, 1, "covariance must be square (rows separated by ';')");
    m.row(i) = rows[i].transpose();
  }
  return m;
}

bool to_bool(const std::string& text, std::size_t row) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ParseError(row, 1, "expected true or false, got '" + t + "'");
}

std::string format_value(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  return format_double(v);
}

std::string format_vector(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? " " : "") + format_value(v[i]);
  return out;
}

}  // namespace

Eigen::VectorXd Scenario::arm_mean(int arm) const {
  if (arms == 1) return mean_base;
  const double delta = arm == 0 ? 1.0 : -1.0;
  return mean_base + delta * tau * tau_coef + psi * psi_coef;
}

void Scenario::validate() const {
  if (arms != 1 && arms != 2) throw ValidationError("arms must be 1 or 2");
  if (n < 2) throw ValidationError("at least two patients per arm are required");
  if (visits < 1) throw ValidationError("visits must be at least 1");
  if (mean_base.size() != visits) throw ValidationError("mean_base must have one entry per visit");
  if (cov.rows() != visits || cov.cols() != visits) throw ValidationError("covariance must be visits x visits");
  if (!cov.isApprox(cov.transpose(), 1e-12)) throw ValidationError("covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success || cov.diagonal().minCoeff() <= 0.0) {
    throw ValidationError("covariance must be positive definite");
  }
  if (arms == 2) {
    if (tau_coef.size() != visits || psi_coef.size() != visits) {
      throw ValidationError("two-arm scenarios need tau_coef and psi_coef with one entry per visit");
    }
  }
  if (!(baseline_lower >= 0.0 && baseline_lower < baseline_upper)) {
    throw ValidationError("baseline range must satisfy 0 <= lower < upper");
  }
  if (std::isnan(alpha) || alpha == HUGE_VAL || !std::isfinite(gamma) || !std::isfinite(beta)) {
    throw ValidationError("new-lesion coefficients must be finite (alpha may be -inf)");
  }
  endpoint.validate();
  if (endpoint.horizon > visits) throw ValidationError("endpoint time exceeds the number of visits");
}

Scenario parse_scenario(std::istream& in) {
  Scenario s;
  s.visits = 0;
  double log_scale = 0.0;
  bool time_set = false;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(row, 1, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "name") {
      s.name = value;
    } else if (key == "arms") {
      s.arms = static_cast<int>(to_int(value, row));
    } else if (key == "n") {
      s.n = static_cast<int>(to_int(value, row));
    } else if (key == "visits") {
      s.visits = static_cast<int>(to_int(value, row));
    } else if (key == "mean_base") {
      s.mean_base = to_vector(value, row);
    } else if (key == "mean_base_log_scale") {
      log_scale = to_double(value, row);
      if (!(log_scale > 0.0)) throw ParseError(row, eq + 2, "mean_base_log_scale must be positive");
    } else if (key == "tau_coef") {
      s.tau_coef = to_vector(value, row);
    } else if (key == "psi_coef") {
      s.psi_coef = to_vector(value, row);
    } else if (key == "covariance") {
      s.cov = to_matrix(value, row);
    } else if (key == "alpha") {
      s.alpha = to_double(value, row);
    } else if (key == "gamma") {
      s.gamma = to_double(value, row);
    } else if (key == "beta") {
      s.beta = to_double(value, row);
    } else if (key == "tau") {
      s.tau = to_double(value, row);
    } else if (key == "psi") {
      s.psi = to_double(value, row);
    } else if (key == "baseline_lower") {
      s.baseline_lower = to_double(value, row);
    } else if (key == "baseline_upper") {
      s.baseline_upper = to_double(value, row);
    } else if (key == "growth_censoring") {
      s.growth_censoring = to_bool(value, row);
    } else if (key == "endpoint") {
      s.endpoint.kind = parse_endpoint_kind(value);
    } else if (key == "time") {
      s.endpoint.horizon = static_cast<int>(to_int(value, row));
      time_set = true;
    } else if (key == "intermediate") {
      if (value == "unbounded") {
        s.endpoint.intermediate = IntermediateBound::unbounded;
      } else if (value == "growth") {
        s.endpoint.intermediate = IntermediateBound::growth;
      } else {
        throw ParseError(row, eq + 2, "intermediate must be unbounded or growth");
      }
    } else if (key == "response_threshold") {
      s.endpoint.response = to_double(value, row);
    } else if (key == "growth_threshold") {
      s.endpoint.growth = to_double(value, row);
    } else if (key == "response_ratio") {
      s.endpoint.response = std::log(to_double(value, row));
    } else if (key == "growth_ratio") {
      s.endpoint.growth = std::log(to_double(value, row));
    } else if (key == "seed") {
      s.seed = static_cast<std::uint64_t>(to_int(value, row));
    } else {
      throw ParseError(row, 1, "unknown key '" + key + "'");
    }
  }
  if (s.visits == 0) s.visits = static_cast<int>(s.mean_base.size());
  if (log_scale > 0.0) s.mean_base *= std::log(log_scale);
  if (s.arms == 2) {
    if (s.tau_coef.size() == 0) s.tau_coef = Eigen::VectorXd::Ones(s.visits);
    if (s.psi_coef.size() == 0) s.psi_coef = Eigen::VectorXd::Ones(s.visits);
  }
  if (!time_set) s.endpoint.horizon = s.visits;
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open scenario file " + path.string());
  return parse_scenario(in);
}

void write_scenario(std::ostream& out, const Scenario& s) {
  out << "name = " << s.name << '\n';
  out << "arms = " << s.arms << '\n';
  out << "n = " << s.n << '\n';
  out << "visits = " << s.visits << '\n';
  out << "mean_base = " << format_vector(s.mean_base) << '\n';
  if (s.arms == 2) {
    out << "tau_coef = " << format_vector(s.tau_coef) << '\n';
    out << "psi_coef = " << format_vector(s.psi_coef) << '\n';
  }
  out << "covariance = ";
  for (Eigen::Index i = 0; i < s.cov.rows(); ++i) out << (i ? "; " : "") << format_vector(s.cov.row(i).transpose());
  out << '\n';
  out << "alpha = " << format_value(s.alpha) << '\n';
  out << "gamma = " << format_value(s.gamma) << '\n';
  out << "beta = " << format_value(s.beta) << '\n';
  out << "tau = " << format_value(s.tau) << '\n';
  out << "psi = " << format_value(s.psi) << '\n';
  out << "baseline_lower = " << format_value(s.baseline_lower) << '\n';
  out << "baseline_upper = " << format_value(s.baseline_upper) << '\n';
  out << "growth_censoring = " << (s.growth_censoring ? "true" : "false") << '\n';
  out << "endpoint = " << to_string(s.endpoint.kind) << '\n';
  out << "time = " << s.endpoint.horizon << '\n';
  out << "intermediate = " << (s.endpoint.intermediate == IntermediateBound::growth ? "growth" : "unbounded") << '\n';
  out << "response_threshold = " << format_value(s.endpoint.response) << '\n';
  out << "growth_threshold = " << format_value(s.endpoint.growth) << '\n';
  out << "seed = " << s.seed << '\n';
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : detail::embedded_presets()) names.emplace_back(name);
  return names;
}

Scenario preset(const std::string& name) {
  for (const auto& [key, text] : detail::embedded_presets()) {
    if (key == name) {
      std::istringstream in{std::string(text)};
      return parse_scenario(in);
    }
  }
  throw InvalidArgument("unknown preset '" + name + "'");
}

}  // namespace augbin
