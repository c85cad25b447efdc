#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "phaseforge/phase.hpp"

using namespace phaseforge;

namespace {

constexpr double kPi = std::numbers::pi;

FringeStack<double> pixel_stack(double i0, double i1, double i2) {
  FringeStack<double> s;
  s.images[0] = Grid<double>::Constant(1, 1, i0);
  s.images[1] = Grid<double>::Constant(1, 1, i1);
  s.images[2] = Grid<double>::Constant(1, 1, i2);
  return s;
}

// I_n = A + B cos(Phi - 2 pi n / 3), written out independently of sim.
FringeStack<double> cosine_stack(const Grid<double>& A, const Grid<double>& B, const Grid<double>& Phi) {
  FringeStack<double> s;
  for (int n = 0; n < 3; ++n) s.images[n] = A + B * (Phi - 2 * kPi * n / 3).cos();
  return s;
}

}  // namespace

TEST(Wrap, Examples) {
  EXPECT_EQ(wrap(0.0), 0.0);
  EXPECT_NEAR(wrap(3 * kPi / 2), -kPi / 2, 1e-15);
  EXPECT_EQ(wrap(-kPi), kPi);
  EXPECT_EQ(wrap(kPi), kPi);
}

TEST(Wrap, RangeAndPeriodProperty) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-500, 500);
  for (int i = 0; i < 100000; ++i) {
    const double phi = u(rng);
    const double w = wrap(phi);
    ASSERT_GT(w, -kPi);
    ASSERT_LE(w, kPi);
    const double turns = (phi - w) / (2 * kPi);
    ASSERT_NEAR(turns, std::round(turns), 1e-9);
  }
}

TEST(Wrap, ArrayOverload) {
  Grid<double> g(1, 3);
  g << 0.0, 3 * kPi / 2, -kPi;
  const Grid<double> w = wrap(g);
  EXPECT_EQ(w(0, 0), 0.0);
  EXPECT_NEAR(w(0, 1), -kPi / 2, 1e-15);
  EXPECT_EQ(w(0, 2), kPi);
}

TEST(FringeOrder, Examples) {
  EXPECT_EQ(fringe_order_of(0.0, 8), 0);
  EXPECT_EQ(fringe_order_of(24.0, 8), 4);
  EXPECT_NEAR(wrap(24.0), -1.1327, 1e-4);
  EXPECT_NEAR(wrap(24.0) + 2 * kPi * 4, 24.0, 1e-12);
}

TEST(FringeOrder, LastPeriodKeepsIdentity) {
  for (int f : {1, 8, 64}) {
    const double Phi = 2 * kPi * f - 0.1;
    const int k = fringe_order_of(Phi, f);
    EXPECT_NEAR(wrap(Phi) + 2 * kPi * k, Phi, 1e-12);
  }
}

TEST(FringeOrder, RoundTripProperty) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> freq(1, 64);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100000; ++i) {
    const int f = freq(rng);
    const double Phi = u(rng) * 2 * kPi * f;
    if (Phi >= 2 * kPi * f) continue;
    ASSERT_NEAR(wrap(Phi) + 2 * kPi * fringe_order_of(Phi, f), Phi, 1e-12);
  }
}

TEST(FringeOrder, OutOfRange) {
  EXPECT_THROW(fringe_order_of(-1e-9, 8), Error);
  EXPECT_THROW(fringe_order_of(2 * kPi * 8, 8), Error);
  EXPECT_THROW(fringe_order_of(std::nan(""), 8), Error);
  try {
    fringe_order_of(-1.0, 4);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OutOfRange);
  }
}

TEST(FringeOrder, GridVersion) {
  PhaseMap<double> m{Grid<double>(1, 3), PhaseKind::absolute, 8};
  m.values << 0.0, 24.0, 7.0;
  const OrderGrid k = fringe_orders(m);
  EXPECT_EQ(k(0, 0), 0);
  EXPECT_EQ(k(0, 1), 4);
  EXPECT_EQ(k(0, 2), 1);
}

TEST(RetrievePhase, Examples) {
  EXPECT_NEAR(retrieve_phase(pixel_stack(1.0, 0.25, 0.25)).values(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(retrieve_phase(pixel_stack(0.5, 0.9330, 0.0670)).values(0, 0), kPi / 2, 1e-4);
  // forward model at Phi = -2 with A = B = 0.5
  const double I[3] = {0.5 + 0.5 * std::cos(-2.0), 0.5 + 0.5 * std::cos(-2.0 - 2 * kPi / 3),
                       0.5 + 0.5 * std::cos(-2.0 - 4 * kPi / 3)};
  EXPECT_NEAR(I[0], 0.2919, 5e-5);
  EXPECT_NEAR(I[1], 0.2103, 5e-5);
  EXPECT_NEAR(I[2], 0.9978, 5e-5);
  EXPECT_NEAR(retrieve_phase(pixel_stack(I[0], I[1], I[2])).values(0, 0), -2.0, 1e-12);
  // (0.2919, 0.2105, 0.9978): I1 is off by 2e-4 from the forward model
  EXPECT_NEAR(retrieve_phase(pixel_stack(0.2919, 0.2105, 0.9978)).values(0, 0), -2.0, 5e-4);
}

TEST(RetrievePhase, CarriesFrequencyAndKind) {
  FringeStack<double> s = pixel_stack(1.0, 0.25, 0.25);
  s.acquisition.frequency = 16;
  const PhaseMap<double> p = retrieve_phase(s);
  EXPECT_EQ(p.frequency, 16);
  EXPECT_EQ(p.kind, PhaseKind::wrapped);
}

TEST(RetrievePhase, DegeneratePixelIsZeroAndMasked) {
  const FringeStack<double> s = pixel_stack(0.5, 0.5, 0.5);
  EXPECT_EQ(retrieve_phase(s).values(0, 0), 0.0);
  EXPECT_FALSE(modulation(s).mask(0, 0));
}

TEST(RetrievePhase, MinusPiBoundaryMapsToPi) {
  // I1 == I2 and 2 I0 < I1 + I2 sits on the branch cut.
  const double phi = retrieve_phase(pixel_stack(0.0, 0.75, 0.75)).values(0, 0);
  EXPECT_EQ(phi, kPi);
  FringeStack<double> neg = pixel_stack(0.0, 0.75, 0.75);
  neg.images[1](0, 0) = -0.0;
  neg.images[2](0, 0) = 0.0;
  neg.images[0](0, 0) = -1.0;
  EXPECT_EQ(retrieve_phase(neg).values(0, 0), kPi);
}

TEST(RetrievePhase, OracleEquivalenceProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  const int n = 10000;
  Grid<double> A(100, 100), B(100, 100), Phi(100, 100);
  for (int i = 0; i < n; ++i) {
    B.data()[i] = 0.05 + 0.45 * u(rng) + 1e-6;
    A.data()[i] = B.data()[i] + u(rng);
    Phi.data()[i] = -50 + 100 * u(rng);
  }
  const PhaseMap<double> p = retrieve_phase(cosine_stack(A, B, Phi));
  EXPECT_LT((p.values - wrap(Phi)).abs().maxCoeff(), 1e-9);
  EXPECT_GT(p.values.minCoeff(), -kPi);
  EXPECT_LE(p.values.maxCoeff(), kPi);
}

TEST(RetrievePhase, ScaleAndOffsetInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  Grid<double> A(32, 32), B(32, 32), Phi(32, 32);
  for (Eigen::Index i = 0; i < A.size(); ++i) {
    B.data()[i] = 0.1 + 0.3 * u(rng);
    A.data()[i] = 0.5;
    Phi.data()[i] = 2 * kPi * u(rng);
  }
  const FringeStack<double> base = cosine_stack(A, B, Phi);
  const Grid<double> ref = retrieve_phase(base).values;
  for (double c : {0.01, 0.7, 3.0, 250.0}) {
    FringeStack<double> scaled = base;
    for (auto& img : scaled.images) img *= c;
    EXPECT_LT((retrieve_phase(scaled).values - ref).abs().maxCoeff(), 1e-12) << "c=" << c;
  }
  for (double d : {-0.4, 0.2, 10.0}) {
    FringeStack<double> shifted = base;
    for (auto& img : shifted.images) img += d;
    EXPECT_LT((retrieve_phase(shifted).values - ref).abs().maxCoeff(), 1e-10) << "d=" << d;
  }
}

TEST(RetrievePhase, DimensionMismatch) {
  FringeStack<double> s = pixel_stack(1, 1, 1);
  s.images[2] = Grid<double>::Zero(2, 1);
  EXPECT_THROW(retrieve_phase(s), Error);
  EXPECT_THROW(modulation(s), Error);
}

TEST(Modulation, Examples) {
  const ModulationMap<double> ideal = modulation(pixel_stack(1.0, 0.25, 0.25));
  EXPECT_NEAR(ideal.average(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(ideal.modulation(0, 0), 0.5, 1e-15);
  EXPECT_TRUE(ideal.mask(0, 0));

  const ModulationMap<double> flat = modulation(pixel_stack(0.5, 0.5, 0.5));
  EXPECT_EQ(flat.average(0, 0), 0.5);
  EXPECT_EQ(flat.modulation(0, 0), 0.0);

  Grid<double> A = Grid<double>::Constant(1, 1, 0.5), B = Grid<double>::Constant(1, 1, 0.05),
               Phi = Grid<double>::Constant(1, 1, 1.0);
  const ModulationMap<double> weak = modulation(cosine_stack(A, B, Phi), 0.1);
  EXPECT_NEAR(weak.modulation(0, 0), 0.05, 1e-12);
  EXPECT_FALSE(weak.mask(0, 0));
}

TEST(Modulation, MaskImpliesThresholdProperty) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  FringeStack<double> s;
  for (auto& img : s.images) img = Grid<double>::NullaryExpr(40, 40, [&] { return u(rng); });
  for (double t : {0.0, 0.05, 0.08, 0.2}) {
    const ModulationMap<double> m = modulation(s, t);
    EXPECT_GE(m.modulation.minCoeff(), 0.0);
    for (Eigen::Index i = 0; i < m.mask.size(); ++i) {
      EXPECT_EQ(m.mask.data()[i], m.modulation.data()[i] >= t);
    }
  }
}

TEST(Modulation, DefaultThreshold) { EXPECT_DOUBLE_EQ(kDefaultModulationThreshold, 0.08); }

TEST(UnitAbsolute, MapsIntoOnePeriod) {
  PhaseMap<double> w{Grid<double>(1, 4), PhaseKind::wrapped, 1};
  w.values << 0.0, kPi, -kPi / 2, -1e-18;
  const PhaseMap<double> a = unit_absolute(w);
  EXPECT_EQ(a.kind, PhaseKind::absolute);
  EXPECT_EQ(a.values(0, 0), 0.0);
  EXPECT_EQ(a.values(0, 1), kPi);
  EXPECT_NEAR(a.values(0, 2), 3 * kPi / 2, 1e-15);
  EXPECT_GE(a.values(0, 3), 0.0);
  EXPECT_LT(a.values(0, 3), 2 * kPi);
  w.frequency = 8;
  EXPECT_THROW(unit_absolute(w), Error);
}
