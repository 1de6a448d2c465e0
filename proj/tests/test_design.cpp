#include <gtest/gtest.h>

#include "test_support.hpp"

namespace snxover {
namespace {

using testing::make_layout;

TEST(ResponseOrder, PeriodMajor) {
  const auto two = response_order(make_layout(2, 1, 2, 2, 2, {{1, 2}, {2, 1}}));
  const std::vector<std::pair<int, int>> expected = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
  EXPECT_EQ(two, expected);

  const auto one = response_order(make_layout(1, 1, 1, 1, 1, {{1}}));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], std::make_pair(1, 1));

  const auto study = response_order(latin_square_3x3_layout(30, 4));
  ASSERT_EQ(study.size(), 12u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(study[static_cast<std::size_t>(k)].first, 1);
  }
}

TEST(BuildDesign, TwoByTwoWorkedExample) {
  const CrossoverLayout layout = make_layout(2, 1, 2, 2, 2, {{1, 2}, {2, 1}});
  Eigen::MatrixXd x1(4, 4), x2(4, 4);
  x1 << 1, 0, 0, 0,
        1, 0, 0, 1,
        1, 1, 1, 0,
        1, 1, 1, 1;
  x2 << 1, 0, 1, 0,
        1, 0, 1, 1,
        1, 1, 0, 0,
        1, 1, 0, 1;
  const DesignPair d1 = build_design(layout, 1, 1);
  const DesignPair d2 = build_design(layout, 2, 1);
  EXPECT_EQ(d1.X, x1);
  EXPECT_EQ(d2.X, x2);
  EXPECT_EQ(d1.Z, Eigen::VectorXd::Ones(4));
}

TEST(BuildDesign, InterceptOnly) {
  const DesignPair d = build_design(make_layout(1, 2, 1, 1, 1, {{1}}), 1, 2);
  EXPECT_EQ(d.X, Eigen::MatrixXd::Ones(1, 1));
}

TEST(BuildDesign, StudyLayoutSequenceTwo) {
  const CrossoverLayout layout = latin_square_3x3_layout(30, 4);
  const int subject = 15;
  const double w = covariate_w(30, subject);
  ASSERT_EQ(w, 1.0);
  Eigen::MatrixXd expected(12, 9);
  // intercept, period_2, period_3, treatment_2, treatment_3, gene_2..gene_4, w
  expected << 1, 0, 0, 1, 0, 0, 0, 0, 1,
              1, 0, 0, 1, 0, 1, 0, 0, 1,
              1, 0, 0, 1, 0, 0, 1, 0, 1,
              1, 0, 0, 1, 0, 0, 0, 1, 1,
              1, 1, 0, 0, 1, 0, 0, 0, 1,
              1, 1, 0, 0, 1, 1, 0, 0, 1,
              1, 1, 0, 0, 1, 0, 1, 0, 1,
              1, 1, 0, 0, 1, 0, 0, 1, 1,
              1, 0, 1, 0, 0, 0, 0, 0, 1,
              1, 0, 1, 0, 0, 1, 0, 0, 1,
              1, 0, 1, 0, 0, 0, 1, 0, 1,
              1, 0, 1, 0, 0, 0, 0, 1, 1;
  EXPECT_EQ(build_design(layout, 2, subject, {{"w", w}}).X, expected);
}

TEST(BuildDesign, Errors) {
  const CrossoverLayout layout = latin_square_3x3_layout(30, 4);
  EXPECT_THROW(build_design(layout, 4, 1, {{"w", 0}}), DataError);
  EXPECT_THROW(build_design(layout, 0, 1, {{"w", 0}}), DataError);
  EXPECT_THROW(build_design(layout, 1, 31, {{"w", 0}}), DataError);
  EXPECT_THROW(build_design(layout, 1, 1, {}), DataError);
  EXPECT_THROW(build_design(layout, 1, 1, {{"w", 0}, {"age", 3}}), DataError);
}

TEST(BuildDesign, StructuralInvariants) {
  const CrossoverLayout layout = latin_square_3x3_layout(2, 4);
  const FixedEffectIndex index(layout);
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(9, 9);
  for (int i = 1; i <= 3; ++i) {
    const Eigen::MatrixXd X = build_design(layout, i, 1, {{"w", 1.0 * i}}).X;
    EXPECT_EQ(X.col(0), Eigen::VectorXd::Ones(12));
    const int t2 = index.column("treatment_2");
    for (Eigen::Index r = 0; r < 12; ++r) {
      EXPECT_LE(X.row(r).segment(t2, 2).sum(), 1.0);
      const int period = static_cast<int>(r / 4);
      if (layout.assignment[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(period)] == 1) {
        EXPECT_EQ(X.row(r).segment(t2, 2).sum(), 0.0);
      }
    }
    for (int v = 2; v <= 4; ++v) {
      EXPECT_EQ(X.col(index.column("gene_" + std::to_string(v))).sum(), 3.0);
    }
    pooled += X.transpose() * X;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(pooled);
  EXPECT_EQ(lu.rank(), 9);
}

TEST(FixedEffectIndex, NamesAndColumns) {
  const FixedEffectIndex index(latin_square_3x3_layout(30, 4));
  const std::vector<std::string> expected = {"intercept", "period_2", "period_3", "treatment_2", "treatment_3",
                                             "gene_2",    "gene_3",   "gene_4",   "w"};
  EXPECT_EQ(index.names(), expected);
  for (int k = 0; k < index.size(); ++k) {
    EXPECT_EQ(index.column(index.name(k)), k);
  }
  EXPECT_THROW(index.column("gene_5"), std::out_of_range);
  CrossoverLayout clash = latin_square_3x3_layout(3, 2);
  clash.covariates = {"gene_2"};
  EXPECT_THROW(FixedEffectIndex{clash}, DataError);
}

TEST(CovariateW, Blocks) {
  EXPECT_EQ(covariate_w(30, 11), 1);
  EXPECT_EQ(covariate_w(50, 35), 2);
  EXPECT_EQ(covariate_w(30, 1), 0);
  EXPECT_EQ(covariate_w(30, 10), 0);
  EXPECT_EQ(covariate_w(30, 30), 2);
  EXPECT_EQ(covariate_w(50, 18), 0);
  EXPECT_EQ(covariate_w(50, 19), 1);
  EXPECT_EQ(covariate_w(50, 34), 1);
  // other sizes: equal thirds
  EXPECT_EQ(covariate_w(9, 3), 0);
  EXPECT_EQ(covariate_w(9, 4), 1);
  EXPECT_EQ(covariate_w(9, 9), 2);
  EXPECT_THROW(covariate_w(30, 31), std::out_of_range);
}

TEST(Layout, Validation) {
  EXPECT_TRUE(latin_square_3x3_layout(30, 4).validate().empty());
  const auto warnings = make_layout(2, 3, 2, 2, 1, {{1, 1}, {2, 1}}).validate();
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("sequence 1"), std::string::npos);
  EXPECT_THROW(make_layout(2, 3, 2, 2, 1, {{1, 3}, {2, 1}}).validate(), DataError);
  EXPECT_THROW(make_layout(2, 0, 2, 2, 1, {{1, 2}, {2, 1}}).validate(), DataError);
  EXPECT_THROW(make_layout(2, 3, 2, 2, 1, {{1, 2}}).validate(), DataError);
  EXPECT_EQ(latin_square_3x3_layout(30, 4).fixed_effect_count(), 9);
}

}  // namespace
}  // namespace snxover
