#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "core/error.hpp"
#include "core/factorization.hpp"
#include "oracles.hpp"

namespace cmtrf {
namespace {

const Divergence kSL;

FactorModel make_model(std::vector<std::vector<double>> u, std::vector<std::vector<double>> v) {
  RowMatrix U(u.size(), u[0].size()), V(v.size(), v[0].size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t k = 0; k < u[i].size(); ++k) U(i, k) = u[i][k];
  for (std::size_t j = 0; j < v.size(); ++j)
    for (std::size_t k = 0; k < v[j].size(); ++k) V(j, k) = v[j][k];
  return FactorModel(U, V);
}

// Pattern plus targets given per entry, reordered into CSR order.
struct Problem {
  ObservationPattern pattern;
  std::vector<double> targets;
};

Problem make_problem(std::size_t n, std::size_t m, const std::vector<UserItem>& entries,
                     const std::vector<double>& values) {
  Problem p{ObservationPattern(n, m, entries), std::vector<double>(entries.size())};
  for (std::size_t k = 0; k < entries.size(); ++k) {
    p.targets[p.pattern.position_of_entry(k)] = values[k];
  }
  return p;
}

Problem random_problem(std::size_t n, std::size_t m, double density, std::mt19937_64& rng,
                       double lo = -2, double hi = 2) {
  std::bernoulli_distribution keep(density);
  std::uniform_real_distribution<double> value(lo, hi);
  std::vector<UserItem> entries;
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (keep(rng)) {
        entries.emplace_back(i, j);
        values.push_back(value(rng));
      }
    }
  }
  return make_problem(n, m, entries, values);
}

TEST(PredictScores, OrthogonalFactorsGiveZero) {
  const auto model = make_model({{1, 0}}, {{0, 1}});
  const std::vector<UserItem> pairs{{0, 0}};
  EXPECT_DOUBLE_EQ(predict_scores(model, pairs)[0], 0.0);
}

TEST(PredictScores, ScalarProduct) {
  const auto model = make_model({{2}}, {{3}});
  const std::vector<UserItem> pairs{{0, 0}};
  EXPECT_DOUBLE_EQ(predict_scores(model, pairs)[0], 6.0);
}

TEST(PredictScores, IdentityFactors) {
  const auto model = make_model({{1, 0}, {0, 1}}, {{1, 0}, {0, 1}});
  const std::vector<UserItem> pairs{{0, 0}, {0, 1}, {1, 1}};
  EXPECT_EQ(predict_scores(model, pairs), (std::vector<double>{1, 0, 1}));
}

TEST(PredictScores, OutOfRangeIsIndexError) {
  const auto model = make_model({{1}}, {{1}});
  const std::vector<UserItem> pairs{{0, 1}};
  try {
    predict_scores(model, pairs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIndex);
  }
}

TEST(RandomFactorModel, SeededAndShaped) {
  const auto a = random_factor_model(30, 20, 4, 7);
  const auto b = random_factor_model(30, 20, 4, 7);
  EXPECT_EQ(a.user, b.user);
  EXPECT_EQ(a.item, b.item);
  EXPECT_EQ(a.rank(), 4u);
  const auto big = random_factor_model(400, 400, 10, 1);
  const double var = big.user.squaredNorm() / big.user.size();
  EXPECT_NEAR(std::sqrt(var), 0.1, 0.005);
}

TEST(RandomFactorModel, RankBoundEnforced) {
  EXPECT_THROW(random_factor_model(3, 5, 4, 0), Error);
  EXPECT_THROW(random_factor_model(3, 5, 0, 0), Error);
  EXPECT_NO_THROW(random_factor_model(3, 5, 3, 0));
}

TEST(SolveFactors, UnregularizedScalarLeastSquares) {
  auto p = make_problem(1, 1, {{0, 0}}, {2.0});
  auto model = make_model({{0.3}}, {{1.0}});
  update_factor_side(p.pattern, p.targets, model, {0.0, 0.0}, kSL, FactorSide::kUsers);
  EXPECT_NEAR(model.user(0, 0), 2.0, 1e-9);
  EXPECT_DOUBLE_EQ(model.item(0, 0), 1.0);
}

TEST(SolveFactors, RidgeScalar) {
  auto p = make_problem(1, 1, {{0, 0}}, {2.0});
  auto model = make_model({{0.3}}, {{1.0}});
  update_factor_side(p.pattern, p.targets, model, {1.0, 1.0}, kSL, FactorSide::kUsers);
  EXPECT_NEAR(model.user(0, 0), 1.0, 1e-12);  // 2 / (1 + 1)
}

TEST(SolveFactors, RecoversRankOneMatrix) {
  std::vector<UserItem> entries;
  std::vector<double> values;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      entries.emplace_back(i, j);
      values.push_back(i + 1.0);
    }
  }
  const auto p = make_problem(4, 4, entries, values);
  const auto fit = solve_factors(p.pattern, p.targets, random_factor_model(4, 4, 1, 3),
                                 {1e-6, 1e-6}, kSL, 50);
  const auto scores = observed_scores(fit, p.pattern);
  double mse = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    mse += (scores[k] - p.targets[k]) * (scores[k] - p.targets[k]);
  }
  EXPECT_LE(mse / scores.size(), 1e-4);
}

TEST(SolveFactors, HalfStepsNeverIncreaseObjective) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_problem(25, 18, 0.3, rng);
    const RegularizationConfig reg{0.05 * (trial + 1), 0.3};
    auto model = random_factor_model(25, 18, 3, trial);
    double prev = factor_objective(p.pattern, p.targets, model, reg, kSL);
    for (int sweep = 0; sweep < 10; ++sweep) {
      for (auto side : {FactorSide::kUsers, FactorSide::kItems}) {
        update_factor_side(p.pattern, p.targets, model, reg, kSL, side);
        const double now = factor_objective(p.pattern, p.targets, model, reg, kSL);
        EXPECT_LE(now, prev + 1e-9 * std::max(1.0, prev));
        prev = now;
      }
    }
  }
}

TEST(SolveFactors, FreshRowUpdateIsStrictMinimizer) {
  std::mt19937_64 rng(32);
  const auto p = random_problem(15, 12, 0.5, rng);
  const RegularizationConfig reg{0.5, 0.5};
  auto model = random_factor_model(15, 12, 3, 5);
  update_factor_side(p.pattern, p.targets, model, reg, kSL, FactorSide::kUsers);
  const double base = factor_objective(p.pattern, p.targets, model, reg, kSL);
  std::normal_distribution<double> gauss;
  for (Eigen::Index i = 0; i < model.user.rows(); ++i) {
    for (int rep = 0; rep < 5; ++rep) {
      FactorModel moved = model;
      Eigen::RowVectorXd dir(model.rank());
      for (Eigen::Index k = 0; k < dir.size(); ++k) dir[k] = gauss(rng);
      moved.user.row(i) += 1e-3 * dir.normalized();
      EXPECT_GT(factor_objective(p.pattern, p.targets, moved, reg, kSL), base);
    }
  }
}

TEST(SolveFactors, PredictionsHaveRankAtMostD) {
  std::mt19937_64 rng(33);
  const auto p = random_problem(20, 16, 0.6, rng);
  const auto fit =
      solve_factors(p.pattern, p.targets, random_factor_model(20, 16, 3, 1), {0.1, 0.1}, kSL, 5);
  const Eigen::MatrixXd full = fit.user * fit.item.transpose();
  EXPECT_LE(oracle::numerical_rank(full), 3);
}

TEST(SolveFactors, NonQuadraticDivergencesDescend) {
  std::mt19937_64 rng(34);
  for (const Divergence div : {Divergence(DivergenceKind::kGID), Divergence(DivergenceKind::kKL)}) {
    const auto p = random_problem(20, 15, 0.4, rng, 0.1, 3.0);
    const RegularizationConfig reg{0.2, 0.2};
    auto model = random_factor_model(20, 15, 3, 2);
    double prev = factor_objective(p.pattern, p.targets, model, reg, div);
    for (int sweep = 0; sweep < 8; ++sweep) {
      model = solve_factors(p.pattern, p.targets, model, reg, div, 1);
      const double now = factor_objective(p.pattern, p.targets, model, reg, div);
      EXPECT_LE(now, prev + 1e-9 * std::max(1.0, prev));
      prev = now;
    }
    EXPECT_LT(prev, factor_objective(p.pattern, p.targets, random_factor_model(20, 15, 3, 2),
                                     reg, div));
  }
}

TEST(SolveFactors, TargetOutsideDomainRejected) {
  auto p = make_problem(1, 1, {{0, 0}}, {-1.0});
  try {
    solve_factors(p.pattern, p.targets, make_model({{0.1}}, {{0.1}}), {0.1, 0.1},
                  Divergence(DivergenceKind::kGID), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDomain);
  }
}

TEST(SolveFactors, RowsWithoutObservationsKeepInitAndSkipPenalty) {
  // User 1 and item 2 have no observations.
  const auto p = make_problem(2, 3, {{0, 0}, {0, 1}}, {1.0, 2.0});
  const auto init = random_factor_model(2, 3, 2, 9);
  const RegularizationConfig reg{1.0, 1.0};
  const auto fit = solve_factors(p.pattern, p.targets, init, reg, kSL, 3);
  EXPECT_EQ(fit.user.row(1), init.user.row(1));
  EXPECT_EQ(fit.item.row(2), init.item.row(2));
  const double expected = 0.5 * (fit.user.row(0).squaredNorm() +
                                 fit.item.row(0).squaredNorm() + fit.item.row(1).squaredNorm());
  EXPECT_NEAR(regularization_penalty(p.pattern, fit, reg), expected, 1e-12);
}

TEST(SolveFactors, ShapeMismatchRejected) {
  const auto p = make_problem(2, 2, {{0, 0}}, {1.0});
  EXPECT_THROW(solve_factors(p.pattern, p.targets, random_factor_model(3, 2, 1, 0), {0.1, 0.1},
                             kSL, 1),
               Error);
  const std::vector<double> short_targets;
  EXPECT_THROW(solve_factors(p.pattern, short_targets, random_factor_model(2, 2, 1, 0),
                             {0.1, 0.1}, kSL, 1),
               Error);
}

TEST(ObservationPattern, CsrAndCscViewsAgree) {
  std::mt19937_64 rng(35);
  const auto p = random_problem(12, 9, 0.4, rng);
  std::size_t seen = 0;
  for (std::size_t j = 0; j < p.pattern.num_items(); ++j) {
    for (std::size_t pos : p.pattern.item_positions(j)) {
      EXPECT_EQ(p.pattern.item_at(pos), j);
      ++seen;
    }
  }
  EXPECT_EQ(seen, p.pattern.size());
  for (std::size_t u = 0; u < p.pattern.num_users(); ++u) {
    for (std::size_t pos = p.pattern.user_begin(u); pos < p.pattern.user_end(u); ++pos) {
      EXPECT_EQ(p.pattern.user_at(pos), u);
    }
  }
}

TEST(RegularizationConfig, NegativeOrNonFiniteRejected) {
  EXPECT_THROW((RegularizationConfig{-1.0, 0.0}).validate(), Error);
  EXPECT_THROW((RegularizationConfig{0.0, std::nan("")}).validate(), Error);
  EXPECT_NO_THROW((RegularizationConfig{0.0, 0.0}).validate());
}

}  // namespace
}  // namespace cmtrf
