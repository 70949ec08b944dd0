#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "core/divergence.hpp"
#include "core/error.hpp"

namespace cmtrf {
namespace {

const Divergence kSL{DivergenceKind::kSquaredLoss};
const Divergence kKL{DivergenceKind::kKL};
const Divergence kGID{DivergenceKind::kGID};

TEST(Divergence, SquaredLossIsHalfWeightedSquare) {
  const std::vector<double> x{3}, y{1}, w{2};
  EXPECT_DOUBLE_EQ(kSL.divergence(x, y, w), 4.0);
}

TEST(Divergence, GidIdentityIsZero) {
  const std::vector<double> x{1, 2}, w{1, 1};
  EXPECT_DOUBLE_EQ(kGID.divergence(x, x, w), 0.0);
}

TEST(Divergence, KlAgainstHandEvaluation) {
  const std::vector<double> x{0.5, 0.5}, y{0.25, 0.75}, w{1, 1};
  // 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75)
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  EXPECT_NEAR(kKL.divergence(x, y, w), expected, 1e-14);
  EXPECT_NEAR(expected, 0.14384, 1e-5);
}

TEST(Divergence, ZeroTimesLogZeroIsZero) {
  EXPECT_DOUBLE_EQ(kKL.scalar(0.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(kGID.scalar(0.0, 0.5), 0.5);
}

TEST(Divergence, GradientMapsOfSquaredLossAreIdentity) {
  const std::vector<double> s{1.7, -0.3};
  EXPECT_EQ(kSL.grad_psi(s), s);
  EXPECT_EQ(kSL.grad_phi(s), s);
}

TEST(Divergence, GidGradPhiAtOneIsZero) {
  EXPECT_DOUBLE_EQ(kGID.grad_phi(1.0), 0.0);
}

TEST(Divergence, GidGradientRoundTrip) {
  EXPECT_NEAR(kGID.grad_psi(kGID.grad_phi(2.5)), 2.5, 1e-15);
}

TEST(Divergence, DomainViolationsThrow) {
  const std::vector<double> x{1}, y{0}, w{1};
  try {
    kGID.divergence(x, y, w);
    FAIL() << "expected a domain error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDomain);
  }
  EXPECT_THROW(kKL.grad_phi(-1.0), Error);
  EXPECT_THROW(kGID.grad_phi(1e-13), Error);
  const std::vector<double> neg{-0.1};
  const std::vector<double> one{1};
  EXPECT_THROW(kGID.divergence(neg, one, w), Error);
}

TEST(Divergence, LengthMismatchAndNegativeWeightsRejected) {
  const std::vector<double> a{1, 2}, b{1}, w{1, -1};
  EXPECT_THROW(kSL.divergence(a, b, b), Error);
  EXPECT_THROW(kSL.divergence(a, a, w), Error);
}

TEST(Divergence, KindNamesRoundTrip) {
  for (auto k : {DivergenceKind::kSquaredLoss, DivergenceKind::kKL, DivergenceKind::kGID}) {
    EXPECT_EQ(divergence_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(divergence_kind_from_string("hellinger"), Error);
}

// Random valid inputs: SL anywhere, GID on positive reals, KL on a
// normalized simplex so the per-coordinate form is a true divergence.
struct Draw {
  std::vector<double> x, y, w;
};

Draw draw(const Divergence& div, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(1, 8);
  std::uniform_real_distribution<double> real(-5, 5), pos(0.01, 5), weight(0, 3);
  Draw d;
  const int n = div.kind() == DivergenceKind::kKL ? len(rng) + 1 : len(rng);
  for (int k = 0; k < n; ++k) {
    if (div.is_squared_loss()) {
      d.x.push_back(real(rng));
      d.y.push_back(real(rng));
    } else {
      d.x.push_back(pos(rng));
      d.y.push_back(pos(rng));
    }
    d.w.push_back(div.kind() == DivergenceKind::kKL ? 1.0 : weight(rng));
  }
  if (div.kind() == DivergenceKind::kKL) {
    double sx = 0, sy = 0;
    for (int k = 0; k < n; ++k) {
      sx += d.x[k];
      sy += d.y[k];
    }
    for (int k = 0; k < n; ++k) {
      d.x[k] /= sx;
      d.y[k] /= sy;
    }
  }
  return d;
}

class DivergenceProperties : public ::testing::TestWithParam<DivergenceKind> {};

TEST_P(DivergenceProperties, NonnegativeAndZeroOnDiagonal) {
  const Divergence div(GetParam());
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const Draw d = draw(div, rng);
    EXPECT_GE(div.divergence(d.x, d.y, d.w), -1e-12);
    EXPECT_NEAR(div.divergence(d.x, d.x, d.w), 0.0, 1e-12);
  }
}

TEST_P(DivergenceProperties, ConvexInFirstArgument) {
  const Divergence div(GetParam());
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  for (int trial = 0; trial < 1000; ++trial) {
    const Draw a = draw(div, rng);
    Draw b = draw(div, rng);
    while (b.x.size() != a.x.size()) b = draw(div, rng);
    const double alpha = unit(rng);
    std::vector<double> mix(a.x.size());
    for (std::size_t k = 0; k < mix.size(); ++k) {
      mix[k] = alpha * a.x[k] + (1 - alpha) * b.x[k];
    }
    const double lhs = div.divergence(mix, a.y, a.w);
    const double rhs =
        alpha * div.divergence(a.x, a.y, a.w) + (1 - alpha) * div.divergence(b.x, a.y, a.w);
    EXPECT_LE(lhs, rhs + 1e-9);
  }
}

TEST_P(DivergenceProperties, GradientMapsAreMutualInverses) {
  const Divergence div(GetParam());
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> pos(0.01, 20), real(-5, 5);
  for (int trial = 0; trial < 1000; ++trial) {
    const double y = div.is_squared_loss() ? real(rng) : pos(rng);
    EXPECT_NEAR(div.grad_psi(div.grad_phi(y)), y, 1e-12 * std::max(1.0, y));
    const double s = real(rng);
    EXPECT_NEAR(div.grad_phi(div.grad_psi(s)), s, 1e-12 * std::max(1.0, std::abs(s)));
  }
}

TEST_P(DivergenceProperties, FenchelYoungGapNonnegativeAndTightAtConjugatePair) {
  const Divergence div(GetParam());
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> pos(0.0, 10), real(-5, 5);
  for (int trial = 0; trial < 1000; ++trial) {
    const double x = div.is_squared_loss() ? real(rng) : pos(rng);
    const double s = real(rng);
    EXPECT_GE(div.fenchel_young_gap(x, s), -1e-12);
    EXPECT_NEAR(div.fenchel_young_gap(div.grad_psi(s), s), 0.0, 1e-9);
  }
}

TEST_P(DivergenceProperties, FenchelYoungGapMatchesBregmanThroughMeanMap) {
  // psi(s) + phi(x) - x s = D(x || grad_psi(s)); for KL that is the
  // generalized form x log(x / y) - x + y.
  const Divergence div(GetParam());
  const bool kl = div.kind() == DivergenceKind::kKL;
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> pos(0.01, 10), real(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = div.is_squared_loss() ? real(rng) : pos(rng);
    const double s = real(rng);
    const double y = div.grad_psi(s);
    const double bregman = div.scalar(x, y) + (kl ? y - x : 0.0);
    EXPECT_NEAR(div.fenchel_young_gap(x, s), bregman, 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, DivergenceProperties,
                         ::testing::Values(DivergenceKind::kSquaredLoss,
                                           DivergenceKind::kKL, DivergenceKind::kGID),
                         [](const auto& info) { return std::string(to_string(info.param)); });

double midpoint_violation(const Divergence& div, double x1, double s1, double x2,
                          double s2) {
  const double mid = div.fenchel_young_gap(0.5 * (x1 + x2), 0.5 * (s1 + s2));
  const double avg = 0.5 * (div.fenchel_young_gap(x1, s1) + div.fenchel_young_gap(x2, s2));
  return mid - avg;
}

TEST(JointConvexity, SquaredLossGapIsJointlyConvex) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> real(-10, 10);
  double worst = -1.0;
  for (int trial = 0; trial < 1000; ++trial) {
    worst = std::max(worst, midpoint_violation(kSL, real(rng), real(rng), real(rng), real(rng)));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(JointConvexity, GidGapFailsOnConstructedPair) {
  // At (10, 0) the Hessian [[1/x, -1], [-1, e^s]] has negative determinant;
  // stepping +-(2, 1) along that direction breaks midpoint convexity.
  const double v = midpoint_violation(kGID, 12.0, 1.0, 8.0, -1.0);
  EXPECT_GE(v, 1e-3);
}

}  // namespace
}  // namespace cmtrf
