#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "augbin/errors.hpp"
#include "augbin/simharness.hpp"
#include "augbin/trialdata.hpp"
#include "support.hpp"

using namespace augbin;
using augbin::testing::patient;

TEST(LogRatios, ExactLogs) {
  EXPECT_DOUBLE_EQ(log_ratios(patient(10, {10}))[0], 0.0);
  EXPECT_NEAR(log_ratios(patient(10, {7}))[0], std::log(0.7), 1e-15);
  const auto y = log_ratios(patient(8, {4, 2}));
  EXPECT_NEAR(y[0], std::log(0.5), 1e-15);
  EXPECT_NEAR(y[1], std::log(0.25), 1e-15);
  EXPECT_THROW(log_ratios(patient(0, {1})), ValidationError);
}

TEST(ClassifyFixed, Definition) {
  EXPECT_EQ(classify_fixed(patient(10, {6}), 1), 1);
  EXPECT_EQ(classify_fixed(patient(10, {5}, {1}), 1), 0);
  EXPECT_EQ(classify_fixed(patient(10, {6, 8}), 2), 0);
  EXPECT_EQ(classify_fixed(patient(10, {6}), 2), 0);
  // Growth at visit 1 only matters under the stricter rule.
  const auto grown = patient(10, {13, 6});
  EXPECT_EQ(classify_fixed(grown, 2), 1);
  EXPECT_EQ(classify_fixed(grown, 2, {}, FixedTimeRule::no_progression), 0);
}

TEST(ClassifyBor, Definition) {
  const auto late = patient(10, {8, 6.5});
  EXPECT_EQ(classify_bor(late, false), 1);
  EXPECT_EQ(classify_bor(late, true), 0);
  const auto progressed = patient(10, {6.5, 6}, {0, 1});
  EXPECT_EQ(classify_bor(progressed, false), 1);
  EXPECT_EQ(classify_bor(progressed, true), 0);
  EXPECT_EQ(classify_bor(patient(10, {8, 9, 7.5}), false), 0);
  EXPECT_EQ(classify_bor(patient(10, {6, 6.5}), true), 1);
  // Responses after growth progression do not count.
  EXPECT_EQ(classify_bor(patient(10, {13, 5}), false), 0);
}

TEST(DetectProgression, CausesAndTieBreak) {
  auto g = detect_progression(patient(10, {12.5}));
  EXPECT_EQ(g.cause, ProgressionCause::tumour_growth);
  EXPECT_EQ(g.visit, 1);
  auto n = detect_progression(patient(10, {11, 11.5}, {0, 1}));
  EXPECT_EQ(n.cause, ProgressionCause::new_lesion);
  EXPECT_EQ(n.visit, 2);
  EXPECT_EQ(detect_progression(patient(10, {12.5}, {1})).cause, ProgressionCause::new_lesion);
  EXPECT_EQ(detect_progression(patient(10, {9})).cause, ProgressionCause::none);
}

TEST(Csv, ReadsWellFormedFile) {
  std::istringstream in(
      "patient_id,arm,visit,size_mm,new_lesion\n"
      "A,,0,50,0\nA,,1,40,0\nB,,0,30,0\nB,,1,20,0\nB,,2,15,1\nC,,0,45.5,0\n");
  const auto d = read_csv(in, {.max_visits = 3});
  ASSERT_EQ(d.patients.size(), 3u);
  EXPECT_EQ(d.max_visits, 3);
  EXPECT_FALSE(d.two_arm());
  EXPECT_EQ(d.patients[1].last_observed(), 2);
  EXPECT_EQ(d.patients[1].new_lesion[1], 1);
  EXPECT_EQ(d.patients[2].last_observed(), 0);
}

TEST(Csv, RejectsInvalidRows) {
  auto load = [](const std::string& body) {
    std::istringstream in("patient_id,arm,visit,size_mm,new_lesion\n" + body);
    return read_csv(in);
  };
  EXPECT_THROW(load("A,,0,-5,0\n"), ValidationError);
  EXPECT_THROW(load("A,,0,5,0\nA,,1,5,1\nA,,2,5,0\n"), ValidationError);
  EXPECT_THROW(load("A,,0,5,1\n"), ValidationError);
  EXPECT_THROW(load("A,,0,5,0\nA,,2,5,0\n"), ValidationError);
  EXPECT_THROW(load("A,,0,5,0\nB,1,0,5,0\n"), ValidationError);
  try {
    load("A,,0,5,0\nA,,1,abc,0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_EQ(e.column(), 4u);
  }
  std::istringstream no_header("A,,0,5,0\n");
  EXPECT_THROW(read_csv(no_header), ParseError);
}

TEST(Config, SidecarKeys) {
  std::istringstream in("# comment\nmax_visits = 4\nresponse_ratio=0.7\ngrowth_threshold=0.2\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.max_visits.value(), 4);
  EXPECT_NEAR(c.thresholds.response, std::log(0.7), 1e-15);
  EXPECT_DOUBLE_EQ(c.thresholds.growth, 0.2);
  std::istringstream bad("colour=blue\n");
  EXPECT_THROW(parse_config(bad), ParseError);
}

TEST(Properties, ConfirmedNeverExceedsUnconfirmedAndRoundTrip) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Scenario s = preset(seed % 2 ? "bor-T4-a25" : "bor-T5-a25");
    s.seed = seed;
    s.arms = seed % 3 == 0 ? 2 : 1;
    if (s.arms == 2) {
      s.tau_coef = Eigen::VectorXd::Ones(s.visits);
      s.psi_coef = Eigen::VectorXd::Ones(s.visits);
    }
    const auto data = generate(s, 0);
    for (const auto& p : data.patients) {
      EXPECT_LE(classify_bor(p, true), classify_bor(p, false));
      if (classify_fixed(p, data.max_visits) == 1) {
        for (int t = 0; t < data.max_visits; ++t) EXPECT_EQ(p.new_lesion[t], 0);
      }
    }
    std::ostringstream first;
    write_csv(first, data);
    std::istringstream in(first.str());
    const auto back = read_csv(in, {.max_visits = data.max_visits, .thresholds = data.thresholds});
    std::ostringstream second;
    write_csv(second, back);
    ASSERT_EQ(first.str(), second.str());
    ASSERT_EQ(back.patients.size(), data.patients.size());
    for (std::size_t i = 0; i < back.patients.size(); ++i) {
      EXPECT_EQ(back.patients[i].sizes, data.patients[i].sizes);
      EXPECT_EQ(back.patients[i].baseline, data.patients[i].baseline);
    }
  }
}
