#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "core/factorization.hpp"
#include "core/ratings_data.hpp"

namespace cmtrf {

enum class SynthKind { kSD1, kSD2 };

std::string_view to_string(SynthKind kind);
SynthKind synth_kind_from_string(std::string_view name);

/// Low-rank scores Z = U V^T from Gaussian factors, pushed row by row through
/// the inverse of a user-specific increasing map and quantized to levels
/// 1..L.
///
/// SD1: piecewise-linear map with value Y_i(1) ~ N(1, 1) at level 1 and
///      successive gaps ~ U(epsilon, 2); rating = nearest level value.
/// SD2: Y_i(x) = -(1/c_i) log(-1 + L / (x - 0.5)), c_i ~ N(1, 0.25)
///      truncated to >= 0.1; rating = round(Y_i^-1(z)) clamped to 1..L.
///
/// NaN factor moments pick per-kind defaults: SD1 uses mean sqrt(3.5 / d),
/// std 0.5 (scores centered where the level values live); SD2 uses N(0, 1).
struct SynthConfig {
  SynthKind kind = SynthKind::kSD1;
  std::size_t num_users = 300;
  std::size_t num_items = 200;
  std::size_t rank = 5;
  std::size_t levels = 5;
  double epsilon = 0.5;  // SD1 minimum gap
  double factor_mean = std::numeric_limits<double>::quiet_NaN();
  double factor_std = std::numeric_limits<double>::quiet_NaN();
  double density = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  double resolved_mean() const;
  double resolved_std() const;
};

struct SynthResult {
  SparseRatingDataset dataset;
  // Y_i evaluated at levels 1..L (ascending) for every user.
  std::vector<std::vector<double>> level_values;
  std::vector<double> steepness;  // c_i for SD2, empty for SD1
  FactorModel truth;
  // Unquantized Y_i^-1(Z) for every (user, item), row-major N x M.
  std::vector<double> continuous;
};

SynthResult generate(const SynthConfig& config);

// Nearest level (1-based) to z among increasing level values; ties go low.
std::size_t quantize_nearest(std::span<const double> level_values, double z);

double sd2_forward(double c, double x, std::size_t levels = 5);
double sd2_inverse(double c, double y, std::size_t levels = 5);

// Piecewise-linear SD1 map through (l, Y(l)), linearly extrapolated.
double sd1_forward(std::span<const double> level_values, double x);
double sd1_inverse(std::span<const double> level_values, double z);

void write_truth_json(const SynthResult& result, const SynthConfig& config,
                      const std::filesystem::path& path);

}  // namespace cmtrf
