#include "augbin/report.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "json.hpp"

namespace augbin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void header(std::ostream& out, const std::string& what) {
  out << "# augbin " << what << " v" << kCsvSchemaVersion << '\n';
}

}  // namespace

std::string csv_number(double v) {
  if (std::isnan(v)) return {};
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  return format_double(v);
}

EstimateRow estimate_row(const ResponseEstimate& e, const EndpointSpec& spec) {
  return {"estimate", to_string(e.method), to_string(spec.kind), spec.horizon, e.mean_probability, e.std_error,
          e.ci.lower, e.ci.upper, kNaN, kNaN};
}

EstimateRow difference_row(const TestResult& t, const EndpointSpec& spec) {
  return {"difference", t.method, to_string(spec.kind), spec.horizon, t.estimate, t.std_error, kNaN, kNaN,
          t.statistic, t.p_value};
}

void write_estimates_csv(std::ostream& out, const std::vector<EstimateRow>& rows) {
  header(out, "estimates");
  out << "kind,method,endpoint,time,estimate,se,ci_lower,ci_upper,statistic,p_value\n";
  for (const auto& r : rows) {
    out << r.kind << ',' << r.method << ',' << r.endpoint << ',' << r.time << ',' << csv_number(r.estimate) << ','
        << csv_number(r.se) << ',' << csv_number(r.ci_lower) << ',' << csv_number(r.ci_upper) << ','
        << csv_number(r.statistic) << ',' << csv_number(r.p_value) << '\n';
  }
}

void write_estimates_json(std::ostream& out, const std::vector<EstimateRow>& rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["kind"] = r.kind;
    j["method"] = r.method;
    j["endpoint"] = r.endpoint;
    j["time"] = r.time;
    j["estimate"] = num(r.estimate);
    j["se"] = num(r.se);
    j["ci_lower"] = num(r.ci_lower);
    j["ci_upper"] = num(r.ci_upper);
    j["statistic"] = num(r.statistic);
    j["p_value"] = num(r.p_value);
    doc.push_back(std::move(j));
  }
  out << doc.dump(2) << '\n';
}

void write_oc_csv(std::ostream& out, const std::vector<OperatingCharacteristics>& rows) {
  header(out, "simulate");
  out << "scenario,endpoint,time,true,true_se,replicates,failures";
  const auto& methods = rows.empty() ? std::vector<MethodSummary>{} : rows.front().methods;
  for (const auto& m : methods) {
    const std::string k = to_string(m.method);
    out << ',' << k << "_mean," << k << "_coverage," << k << "_width," << k << "_width_reduction";
  }
  out << '\n';
  for (const auto& oc : rows) {
    out << oc.scenario << ',' << to_string(oc.endpoint.kind) << ',' << oc.endpoint.horizon << ','
        << csv_number(oc.truth.probability) << ',' << csv_number(oc.truth.std_error) << ',' << oc.replicates << ','
        << oc.failures;
    for (const auto& m : oc.methods) {
      out << ',' << csv_number(m.mean_estimate) << ',' << csv_number(m.coverage) << ',' << csv_number(m.mean_width)
          << ',' << csv_number(m.width_reduction);
    }
    out << '\n';
  }
}

void write_replicates_csv(std::ostream& out, const OperatingCharacteristics& oc) {
  header(out, "replicates");
  out << "scenario,replicate,method,estimate,ci_lower,ci_upper\n";
  for (const auto& e : oc.estimates) {
    out << oc.scenario << ',' << e.replicate << ',' << to_string(e.method) << ',' << csv_number(e.estimate) << ','
        << csv_number(e.ci_lower) << ',' << csv_number(e.ci_upper) << '\n';
  }
}

void write_power_csv(std::ostream& out, const std::string& scenario, const EndpointSpec& spec,
                     const std::vector<PowerPoint>& points) {
  header(out, "power");
  out << "scenario,endpoint,time,tau,psi,method,power,se,replicates,failures\n";
  for (const auto& p : points) {
    out << scenario << ',' << to_string(spec.kind) << ',' << spec.horizon << ',' << csv_number(p.tau) << ','
        << csv_number(p.psi) << ',' << to_string(p.method) << ',' << csv_number(p.power) << ','
        << csv_number(p.std_error) << ',' << p.replicates << ',' << p.failures << '\n';
  }
}

void write_permutation_csv(std::ostream& out, const PermutationResult& result, Method method,
                           const EndpointSpec& spec) {
  header(out, "permtest");
  out << "# method=" << to_string(method) << '\n';
  out << "# endpoint=" << to_string(spec.kind) << '\n';
  out << "# time=" << spec.horizon << '\n';
  out << "# observed=" << csv_number(result.observed) << '\n';
  out << "# p_value=" << csv_number(result.p_value) << '\n';
  out << "# permutations=" << result.statistics.size() << '\n';
  out << "# failures=" << result.failures << '\n';
  const bool wald = !result.wald_p.empty();
  if (wald) out << "# wald_rejection_rate=" << csv_number(result.wald_rejection_rate) << '\n';
  out << "permutation,statistic" << (wald ? ",wald_p" : "") << '\n';
  for (std::size_t b = 0; b < result.statistics.size(); ++b) {
    out << b + 1 << ',' << csv_number(result.statistics[b]);
    if (wald) out << ',' << csv_number(result.wald_p[b]);
    out << '\n';
  }
}

void write_key_values(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& entries) {
  for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
}

}  // namespace augbin
