#include "core/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace cmtrf {

InverseTransform::InverseTransform(std::vector<double> latent,
                                   std::vector<double> raw)
    : latent_(std::move(latent)), raw_(std::move(raw)) {
  if (latent_.size() != raw_.size() || latent_.empty()) {
    fail(ErrorCode::kInvalidArgument, "inverse transform needs matching knots");
  }
  for (std::size_t k = 0; k + 1 < latent_.size(); ++k) {
    if (!(latent_[k] < latent_[k + 1]) || !(raw_[k] < raw_[k + 1])) {
      fail(ErrorCode::kInvalidArgument,
           "inverse transform knots must be strictly increasing");
    }
  }
}

double InverseTransform::operator()(double latent) const {
  if (std::isnan(latent)) fail(ErrorCode::kNumerical, "NaN score");
  if (latent <= latent_.front()) return raw_.front();
  if (latent >= latent_.back()) return raw_.back();
  const auto hi = static_cast<std::size_t>(
      std::upper_bound(latent_.begin(), latent_.end(), latent) - latent_.begin());
  const std::size_t lo = hi - 1;
  if (latent == latent_[lo]) return raw_[lo];
  const double frac = (latent - latent_[lo]) / (latent_[hi] - latent_[lo]);
  return raw_[lo] + frac * (raw_[hi] - raw_[lo]);
}

InverseTransform build_inverse(const RatingScaleTransform& transform,
                               std::span<const double> level_vocab) {
  if (transform.size() != level_vocab.size()) {
    fail(ErrorCode::kVocabularyMismatch,
         "transform length differs from the level vocabulary");
  }
  std::vector<double> latent(transform.size());
  for (std::size_t level = 0; level < transform.size(); ++level) {
    latent[level] = transform.at_level(level);
  }
  // With epsilon == 0 knots may coincide; keep the strictly increasing
  // subsequence (the later level wins a tie).
  std::vector<double> lk, rk;
  for (std::size_t level = 0; level < latent.size(); ++level) {
    if (!lk.empty() && latent[level] <= lk.back()) {
      rk.back() = level_vocab[level];
      continue;
    }
    lk.push_back(latent[level]);
    rk.push_back(level_vocab[level]);
  }
  if (lk.size() == 1) {
    lk.push_back(lk.back() + 1.0);
    rk.push_back(rk.back());
    rk.front() = level_vocab.front();
  }
  return InverseTransform(std::move(lk), std::move(rk));
}

RatingPredictor::RatingPredictor(const FactorModel& model,
                                 const TransformSet& transforms,
                                 std::span<const double> level_vocab,
                                 Divergence div)
    : model_(model), route_(transforms.route), div_(div) {
  if (route_.size() != model.num_users()) {
    fail(ErrorCode::kInvalidArgument, "transform routing does not cover every user");
  }
  inverses_.reserve(transforms.transforms.size());
  for (const auto& t : transforms.transforms) {
    inverses_.push_back(build_inverse(t, level_vocab));
  }
}

double RatingPredictor::predict(std::size_t user, std::size_t item) const {
  if (user >= model_.num_users()) {
    fail(ErrorCode::kIndex, "user " + std::to_string(user) + " missing from model");
  }
  if (item >= model_.num_items()) {
    fail(ErrorCode::kIndex, "item " + std::to_string(item) + " missing from model");
  }
  return inverses_[route_[user]](div_.grad_psi(model_.score(user, item)));
}

std::vector<double> RatingPredictor::predict(std::span<const UserItem> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [u, i] : pairs) out.push_back(predict(u, i));
  return out;
}

namespace {

void check_metric_inputs(std::span<const double> p, std::span<const double> t) {
  if (p.size() != t.size()) fail(ErrorCode::kInvalidArgument, "length mismatch");
  if (p.empty()) fail(ErrorCode::kEmptyData, "metrics need at least one prediction");
}

}  // namespace

double mse(std::span<const double> predictions, std::span<const double> truths) {
  check_metric_inputs(predictions, truths);
  double s = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double e = predictions[k] - truths[k];
    s += e * e;
  }
  return s / static_cast<double>(predictions.size());
}

double mae(std::span<const double> predictions, std::span<const double> truths) {
  check_metric_inputs(predictions, truths);
  double s = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    s += std::abs(predictions[k] - truths[k]);
  }
  return s / static_cast<double>(predictions.size());
}

Metrics evaluate_dataset(const RatingPredictor& predictor,
                         const SparseRatingDataset& data,
                         const TrainingData* seen) {
  std::vector<double> preds, truths;
  preds.reserve(data.size());
  truths.reserve(data.size());
  Metrics m;
  for (const Rating& r : data.ratings()) {
    if (seen != nullptr) {
      const bool user_ok = r.user < seen->num_users() && seen->user_has_ratings(r.user);
      const bool item_ok = r.item < seen->num_items() &&
                           !seen->pattern.item_positions(r.item).empty();
      if (!user_ok || !item_ok) {
        ++m.skipped;
        continue;
      }
    }
    preds.push_back(predictor.predict(r.user, r.item));
    truths.push_back(data.raw_value(r.level));
  }
  m.count = preds.size();
  m.mse = mse(preds, truths);
  m.mae = mae(preds, truths);
  return m;
}

}  // namespace cmtrf
