#include <gtest/gtest.h>

#include <addiv/regression.hpp>
#include <addiv/rng.hpp>

#include <cmath>

using namespace addiv;

namespace {
Eigen::MatrixXd uniform_x(Index n, Index d, std::uint64_t seed) {
  CounterRng rng(seed, Stream::Data);
  Eigen::MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = rng.uniform(-1, 1);
  return x;
}
}  // namespace

TEST(CubicBSpline, PartitionOfUnityAndPenaltyNullSpace) {
  const auto s = CubicBSpline::at_quantiles(uniform_x(200, 1, 1).col(0), 20);
  for (double x : {-1.0, -0.3, 0.0, 0.77, 1.0}) EXPECT_NEAR(s.eval(x).sum(), 1.0, 1e-14);
  const Eigen::MatrixXd p = s.curvature_penalty();
  // Greville abscissae reproduce linear functions exactly, so the penalty annihilates them.
  Eigen::VectorXd lin(s.size());
  const auto& t = s.knots();
  for (int i = 0; i < s.size(); ++i) lin(i) = (t[i + 1] + t[i + 2] + t[i + 3]) / 3.0;
  EXPECT_NEAR((p * lin).norm(), 0.0, 1e-9);
  EXPECT_NEAR((p * Eigen::VectorXd::Ones(s.size())).norm(), 0.0, 1e-9);
  for (double x : {-0.9, 0.1, 0.5}) EXPECT_NEAR(s.eval(x).dot(lin), x, 1e-13);
}

TEST(CubicBSpline, SecondDerivativeMatchesFiniteDifference) {
  const CubicBSpline s(0.0, 1.0, {0.2, 0.5, 0.6});
  const double h = 1e-4;
  for (double x : {0.1, 0.33, 0.55, 0.9}) {
    const Eigen::VectorXd fd = (s.eval(x + h) - 2 * s.eval(x) + s.eval(x - h)) / (h * h);
    EXPECT_LT((fd - s.eval(x, 2)).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(FitConditionalMean, ConstantTargetIsExact) {
  const Eigen::MatrixXd x = uniform_x(300, 2, 2);
  const auto m = fit_conditional_mean(x, Eigen::VectorXd::Constant(300, 3.7), {});
  const Eigen::VectorXd p = m.predict(uniform_x(50, 2, 3) * 3);
  for (Index i = 0; i < p.size(); ++i) EXPECT_EQ(p(i), 3.7);
}

TEST(FitConditionalMean, LinearTargetReproduced) {
  const Eigen::MatrixXd x = uniform_x(500, 1, 4);
  const Eigen::VectorXd y = 2.0 * x.col(0);
  const auto m = fit_conditional_mean(x, y, {});
  EXPECT_LT((m.predict(x) - y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitConditionalMean, SineRecovery) {
  const Index n = 2000;
  const Eigen::MatrixXd x = uniform_x(n, 1, 5);
  CounterRng rng(6, Stream::Data);
  Eigen::VectorXd truth = (3.0 * x.col(0).array()).sin().matrix(), y = truth;
  for (Index i = 0; i < n; ++i) y(i) += 0.1 * rng.normal();
  const auto m = fit_conditional_mean(x, y, {});
  const double rmse = std::sqrt((m.predict(x) - truth).squaredNorm() / n);
  EXPECT_LE(rmse, 0.05);
}

TEST(FitConditionalMean, AdditiveTwoInputs) {
  const Index n = 2000;
  const Eigen::MatrixXd x = uniform_x(n, 2, 7);
  CounterRng rng(8, Stream::Data);
  Eigen::VectorXd truth = ((2.0 * x.col(0).array()).sin() + x.col(1).array().square()).matrix(), y = truth;
  for (Index i = 0; i < n; ++i) y(i) += 0.2 * rng.normal();
  const auto m = fit_conditional_mean(x, y, {});
  EXPECT_LE(std::sqrt((m.predict(x) - truth).squaredNorm() / n), 0.05);
}

TEST(FitConditionalMean, TensorCapturesInteraction) {
  const Index n = 2500;
  const Eigen::MatrixXd x = uniform_x(n, 2, 9);
  CounterRng rng(10, Stream::Data);
  Eigen::VectorXd truth(n), y(n);
  for (Index i = 0; i < n; ++i) {
    truth(i) = normal_cdf(-2 * x(i, 0) + 2 * x(i, 1));
    y(i) = truth(i) + 0.3 * rng.normal();
  }
  const auto additive = fit_conditional_mean(x, y, {});
  const auto tensor = fit_conditional_mean(x, y, RegressorSpec{}.with_tensor(true));
  const double e_add = std::sqrt((additive.predict(x) - truth).squaredNorm() / n);
  const double e_ten = std::sqrt((tensor.predict(x) - truth).squaredNorm() / n);
  EXPECT_LT(e_ten, e_add);
  EXPECT_LT(e_ten, 0.05);
}

TEST(FitConditionalMean, DiscreteInputsGiveCellMeans) {
  const Index n = 400;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  CounterRng rng(11, Stream::Data);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = static_cast<double>(i % 3);
    x(i, 1) = static_cast<double>((i / 3) % 2);
    y(i) = rng.normal() + x(i, 0) * x(i, 1);
  }
  const auto m = fit_conditional_mean(x, y, {});
  const Eigen::VectorXd p = m.predict(x);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 2; ++b) {
      double s = 0, c = 0;
      for (Index i = 0; i < n; ++i)
        if (x(i, 0) == a && x(i, 1) == b) {
          s += y(i);
          ++c;
        }
      Eigen::RowVectorXd q(2);
      q << a, b;
      EXPECT_NEAR(m.predict_one(q), s / c, 1e-12);
    }
}

TEST(FitConditionalMean, ClampsOutsideHull) {
  const Eigen::MatrixXd x = uniform_x(500, 1, 12);
  const Eigen::VectorXd y = x.col(0).array().cube().matrix();
  const auto m = fit_conditional_mean(x, y, {});
  Eigen::MatrixXd far(2, 1), edge(2, 1);
  far << -50, 50;
  edge << x.minCoeff(), x.maxCoeff();
  EXPECT_EQ(m.predict(far), m.predict(edge));
}

TEST(FitConditionalMean, ProbabilityClip) {
  const Eigen::MatrixXd x = uniform_x(500, 1, 13);
  const Eigen::VectorXd y = (x.col(0).array() > 0).cast<double>().matrix();
  const auto m = fit_conditional_mean(x, y, RegressorSpec{}.with_link(Link::ClippedProbability));
  const Eigen::VectorXd p = m.predict(x);
  EXPECT_GE(p.minCoeff(), 0.01);
  EXPECT_LE(p.maxCoeff(), 0.99);
}

TEST(FitConditionalMean, ConstantInputReturnsMean) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(100, 1, 2.0);
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(100, 0, 99);
  const auto m = fit_conditional_mean(x, y, {});
  EXPECT_NEAR(m.predict(x)(0), 49.5, 1e-12);
  const auto empty = fit_conditional_mean(Eigen::MatrixXd(100, 0), y, {});
  EXPECT_NEAR(empty.predict(Eigen::MatrixXd(3, 0))(2), 49.5, 1e-12);
}

TEST(FitConditionalMean, Errors) {
  EXPECT_THROW(fit_conditional_mean(uniform_x(5, 1, 1), Eigen::VectorXd::Ones(5), {}), InvalidArgument);
  RegressorSpec bad;
  bad.penalty_grid = {};
  EXPECT_THROW(fit_conditional_mean(uniform_x(50, 1, 1), Eigen::VectorXd::Random(50), bad), InvalidArgument);
  bad = {};
  bad.prob_clip = 0.5;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(FitConditionalMean, WeightedFitMatchesReplication) {
  const Eigen::MatrixXd x = uniform_x(300, 1, 14);
  const Eigen::VectorXd y = (2 * x.col(0).array()).sin().matrix() + 0.1 * Eigen::VectorXd::Random(300);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(300);
  w.head(100).setConstant(2.0);
  Eigen::MatrixXd xr(400, 1);
  Eigen::VectorXd yr(400);
  xr << x, x.topRows(100);
  yr << y, y.head(100);
  RegressorSpec spec;
  spec.penalty_grid = {1e-3};
  const auto mw = fit_conditional_mean(x, y, spec, &w);
  const auto mr = fit_conditional_mean(xr, yr, spec);
  // Same objective; knots differ with the replicated sample, so compare loosely.
  EXPECT_LT((mw.predict(x) - mr.predict(x)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(FitConditionalMean, LocalLinearKernel) {
  const Eigen::MatrixXd x = uniform_x(800, 1, 15);
  const Eigen::VectorXd y = 1.0 + 3.0 * x.col(0).array();
  RegressorSpec spec;
  spec.basis = Basis::LocalLinearKernel;
  const auto m = fit_conditional_mean(x, y, spec);
  EXPECT_LT((m.predict(x) - y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitConditionalMean, SerializesCoefficientsAndKnots) {
  const Eigen::MatrixXd x = uniform_x(200, 1, 16);
  const auto m = fit_conditional_mean(x, (x.col(0).array().sin()).matrix(), {});
  const auto j = m.to_json();
  EXPECT_EQ(j["kind"], "additive");
  EXPECT_FALSE(j["terms"][0]["knots"].empty());
  EXPECT_EQ(j["coefficients"].size(), static_cast<std::size_t>(m.coefficients().size()));
}
