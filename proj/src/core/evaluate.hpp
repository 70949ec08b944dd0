#pragma once

#include <span>
#include <vector>

#include "core/cmtrf.hpp"
#include "core/isotonic.hpp"

namespace cmtrf {

/// Piecewise-linear map from latent value back to the raw rating scale,
/// through the knots (r_k, raw value of level k). Clamps outside the knot
/// range to the extreme rating values.
class InverseTransform {
 public:
  InverseTransform() = default;
  InverseTransform(std::vector<double> latent, std::vector<double> raw);

  double operator()(double latent) const;
  std::span<const double> latent_knots() const { return latent_; }
  std::span<const double> raw_knots() const { return raw_; }

 private:
  std::vector<double> latent_;  // ascending
  std::vector<double> raw_;     // ascending
};

InverseTransform build_inverse(const RatingScaleTransform& transform,
                               std::span<const double> level_vocab);

/// Scores pushed through grad_psi and the inverse of the transform that
/// routes each user.
class RatingPredictor {
 public:
  RatingPredictor(const FactorModel& model, const TransformSet& transforms,
                  std::span<const double> level_vocab, Divergence div = Divergence());

  double predict(std::size_t user, std::size_t item) const;
  std::vector<double> predict(std::span<const UserItem> pairs) const;

 private:
  const FactorModel& model_;
  std::vector<std::size_t> route_;
  std::vector<InverseTransform> inverses_;
  Divergence div_;
};

double mse(std::span<const double> predictions, std::span<const double> truths);
double mae(std::span<const double> predictions, std::span<const double> truths);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;
  std::size_t skipped = 0;  // rows whose user or item had no training data
};

/// Metrics of the predictor on `data` (which must share the training id
/// maps). With skip_unseen, rows whose user or item has no observations in
/// `seen` are left out and counted in Metrics::skipped.
Metrics evaluate_dataset(const RatingPredictor& predictor,
                         const SparseRatingDataset& data,
                         const TrainingData* seen = nullptr);

}  // namespace cmtrf
