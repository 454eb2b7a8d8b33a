#include <gtest/gtest.h>

#include <addiv/addiv.hpp>

#include <cmath>

using namespace addiv;

TEST(PointDgp, DeterministicAndPrefixStable) {
  const PointDGPSpec s{1, 1, 2000, 17};
  const PointDataset a = generate_point(s), b = generate_point(s);
  EXPECT_EQ(a.y(), b.y());
  EXPECT_EQ(a.z(), b.z());
  PointDGPSpec small = s;
  small.n = 100;
  EXPECT_EQ(generate_point(small).y(), a.y().head(100));
  PointDGPSpec other = s;
  other.seed = 18;
  EXPECT_NE(generate_point(other).y(), a.y());
}

TEST(PointDgp, TreatmentShareAndLatentColumn) {
  for (const std::string name : {"y1a1", "y1a2", "y2a1", "y2a2"}) {
    const PointDataset d = generate_point(point_spec(name, 5000, 3));
    EXPECT_GE(d.a().mean(), 0.3) << name;
    EXPECT_LE(d.a().mean(), 0.7) << name;
    ASSERT_TRUE(d.latent_u.has_value());
    EXPECT_LE(d.latent_u->cwiseAbs().maxCoeff(), 1.0);
    EXPECT_LE(d.l().cwiseAbs().maxCoeff(), 1.0);
  }
  EXPECT_THROW(generate_point(PointDGPSpec{1, 1, 0, 1}), InvalidArgument);
}

TEST(PointDgp, NoiseFreeDrawsMatchTheDesignEquations) {
  for (int yd : {1, 2})
    for (int ad : {1, 2}) {
      PointDGPSpec s{yd, ad, 500, 9, false};
      const PointDraw d = draw_point(s);
      for (Index i = 0; i < s.n; ++i) {
        const double l = d.data.l()(i, 0), u = d.u(i), z = d.data.z()(i, 0);
        const int a = static_cast<int>(d.data.a()(i));
        ASSERT_NEAR(z, l + std::sin(3 * l), 1e-12);
        const double p = ad == 1 ? 0.7 * 0.5 * std::erfc((2 * z - 2 * l) / std::sqrt(2.0)) +
                                       0.3 * 0.5 * std::erfc(-(3 * u - l) / std::sqrt(2.0))
                                 : 1.0 / (1.0 + std::exp(-(z - l + u)));
        ASSERT_NEAR(d.treat_prob(i), p, 1e-12);
        const double y = yd == 1 ? 2 * u - 2 * l + 4 * a * l
                                 : (1 - a) * (3 * std::cos(2 * u) - 3 * std::cos(2 * l)) + a * (3 * std::sin(2 * u) + 2 * l);
        ASSERT_NEAR(d.data.y()(i), y, 1e-12);
      }
    }
}

TEST(LongitudinalDgp, ShapeDeterminismAndFirstTreatmentRate) {
  const PanelDataset a = generate_longitudinal({2000, 4}), b = generate_longitudinal({2000, 4});
  EXPECT_EQ(a.n(), 2000);
  EXPECT_EQ(a.horizon(), 1);
  EXPECT_EQ(a.y(), b.y());
  // Pr(A0 = 1) = 0.7 E[Phi(-2 sin(1.5 L0) / sqrt(17))] + 0.3 E[Phi(3 U0 - L0)] by integrating eps_Z0 analytically.
  double integral = 0.0, mass = 0.0;
  const double sd = 1.5, step = 1e-3;
  for (double x = -10 * sd; x <= 10 * sd; x += step) {
    const double w = std::exp(-0.5 * x * x / (sd * sd));
    integral += w * 0.5 * std::erfc(2 * std::sin(1.5 * x) / std::sqrt(17.0) / std::sqrt(2.0));
    mass += w;
  }
  const double pa0 = 0.7 * integral / mass + 0.3 * 0.5;
  const PanelDataset big = generate_longitudinal({200000, 5});
  const double se = std::sqrt(pa0 * (1 - pa0) / 200000.0);
  EXPECT_LT(std::abs(big.a(0).mean() - pa0), 3 * se);
}

TEST(LongitudinalDgp, TruthsByInterventionAndClosedForm) {
  const double t00 = compute_truth_by_intervention(Regime::parse("0,0"), 100000, 1);
  const double t11 = compute_truth_by_intervention(Regime::parse("1,1"), 100000, 1);
  EXPECT_NEAR(t11 - t00, 4.3, 0.1);
  for (const std::string r : {"0,0", "0,1", "1,0", "1,1", "x,0", "x,1"}) {
    const Regime g = Regime::parse(r);
    const double resim = compute_truth_by_intervention(g, 100000, 3);
    EXPECT_NEAR(resim, *longitudinal_closed_form(g), 0.05) << r;
  }
  EXPECT_EQ(compute_truth_by_intervention(Regime::parse("x,1"), 1000, 8),
            compute_truth_by_intervention(Regime::parse("x,1"), 1000, 8));
}

TEST(ContinuousDgp, MixtureMeansAndTruth) {
  const PointDataset d = generate_continuous({100000, 2});
  EXPECT_TRUE(d.continuous_treatment());
  // E[A] = 0.5 (0.5 + 0.25) + 0.5 (2 (0.3 + 0.2) - 0.5 + 0.15) = 0.7.
  EXPECT_NEAR(d.a().mean(), 0.7, 0.02);
  EXPECT_DOUBLE_EQ(ContinuousDGPSpec::truth(1.0), 2.25);
}

TEST(Registry, NamesAndErrors) {
  for (const auto& info : dgp_registry()) {
    const GeneratedData g = generate(info.name, 200, 1);
    EXPECT_EQ(g.panel.has_value(), info.longitudinal) << info.name;
  }
  try {
    find_dgp("y3a1");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("oracle-long"), std::string::npos);
  }
}

TEST(Oracles, AivConstructionAndNoConfoundingVariant) {
  const auto spec = aiv_oracle();
  for (std::size_t li = 0; li < spec.l_values.size(); ++li)
    for (std::size_t ui = 0; ui < spec.u_values.size(); ++ui) {
      const double base = spec.treat_prob(1, static_cast<int>(li), static_cast<int>(ui), 0) -
                          spec.treat_prob(1, static_cast<int>(li), 0, 0);
      for (std::size_t zi = 1; zi < spec.z_values.size(); ++zi)
        EXPECT_NEAR(spec.treat_prob(1, static_cast<int>(li), static_cast<int>(ui), static_cast<int>(zi)) -
                        spec.treat_prob(1, static_cast<int>(li), 0, static_cast<int>(zi)),
                    base, 1e-15);
    }
  const PointOracle free(aiv_oracle(false));
  const auto f = free.f_zero(1, [](double z, double) { return z; });
  for (const auto& row : f)
    for (double v : row) EXPECT_NEAR(v, 0.0, 1e-12);
}
