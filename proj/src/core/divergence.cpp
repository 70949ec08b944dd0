#include "core/divergence.hpp"

#include <cmath>
#include <sstream>

#include "core/error.hpp"

namespace cmtrf {
namespace {

double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

// x log(x / y) with 0 log 0 = 0.
double xlog_ratio(double x, double y) {
  return x == 0.0 ? 0.0 : x * std::log(x / y);
}

}  // namespace

std::string_view to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::kSquaredLoss: return "squared";
    case DivergenceKind::kKL: return "kl";
    case DivergenceKind::kGID: return "gid";
  }
  return "unknown";
}

DivergenceKind divergence_kind_from_string(std::string_view name) {
  if (name == "squared" || name == "sl") return DivergenceKind::kSquaredLoss;
  if (name == "kl") return DivergenceKind::kKL;
  if (name == "gid") return DivergenceKind::kGID;
  fail(ErrorCode::kInvalidArgument,
       "unknown divergence '" + std::string(name) + "'");
}

bool Divergence::in_domain(double x) const {
  if (!std::isfinite(x)) return false;
  if (is_squared_loss()) return true;
  return x >= 0.0;
}

bool Divergence::in_interior(double y) const {
  if (!std::isfinite(y)) return false;
  if (is_squared_loss()) return true;
  return y > kBoundaryTol;
}

void Divergence::require_domain(double x) const {
  if (!in_domain(x)) {
    std::ostringstream os;
    os << to_string(kind_) << ": argument " << x << " outside the domain";
    fail(ErrorCode::kDomain, os.str());
  }
}

void Divergence::require_interior(double y) const {
  if (!in_interior(y)) {
    std::ostringstream os;
    os << to_string(kind_) << ": argument " << y
       << " outside the domain interior";
    fail(ErrorCode::kDomain, os.str());
  }
}

double Divergence::phi(double x) const {
  require_domain(x);
  switch (kind_) {
    case DivergenceKind::kSquaredLoss: return 0.5 * x * x;
    case DivergenceKind::kKL: return xlogx(x);
    case DivergenceKind::kGID: return xlogx(x) - x;
  }
  return 0.0;
}

double Divergence::psi(double s) const {
  switch (kind_) {
    case DivergenceKind::kSquaredLoss: return 0.5 * s * s;
    case DivergenceKind::kKL: return std::exp(s - 1.0);
    case DivergenceKind::kGID: return std::exp(s);
  }
  return 0.0;
}

double Divergence::grad_phi(double y) const {
  require_interior(y);
  switch (kind_) {
    case DivergenceKind::kSquaredLoss: return y;
    case DivergenceKind::kKL: return std::log(y) + 1.0;
    case DivergenceKind::kGID: return std::log(y);
  }
  return 0.0;
}

double Divergence::grad_psi(double s) const {
  if (!std::isfinite(s)) fail(ErrorCode::kDomain, "non-finite score");
  switch (kind_) {
    case DivergenceKind::kSquaredLoss: return s;
    case DivergenceKind::kKL: return std::exp(s - 1.0);
    case DivergenceKind::kGID: return std::exp(s);
  }
  return 0.0;
}

double Divergence::hess_psi(double s) const {
  return is_squared_loss() ? 1.0 : grad_psi(s);
}

double Divergence::scalar(double x, double y) const {
  require_domain(x);
  require_interior(y);
  switch (kind_) {
    case DivergenceKind::kSquaredLoss: return 0.5 * (x - y) * (x - y);
    case DivergenceKind::kKL: return xlog_ratio(x, y);
    case DivergenceKind::kGID: return xlog_ratio(x, y) - x + y;
  }
  return 0.0;
}

double Divergence::fenchel_young_gap(double x, double s) const {
  if (is_squared_loss()) return 0.5 * (x - s) * (x - s);
  return psi(s) + phi(x) - x * s;
}

double Divergence::divergence(std::span<const double> x,
                              std::span<const double> y,
                              std::span<const double> w) const {
  if (x.size() != y.size() || x.size() != w.size()) {
    fail(ErrorCode::kInvalidArgument, "divergence: length mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (w[i] < 0.0) fail(ErrorCode::kInvalidArgument, "negative weight");
    total += w[i] * scalar(x[i], y[i]);
  }
  return total;
}

std::vector<double> Divergence::grad_phi(std::span<const double> y) const {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = grad_phi(y[i]);
  return out;
}

std::vector<double> Divergence::grad_psi(std::span<const double> s) const {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = grad_psi(s[i]);
  return out;
}

}  // namespace cmtrf
