#pragma once

#include <span>
#include <variant>
#include <vector>

#include "divbar/rng.hpp"

namespace divbar {

/// Rayleigh block fading: per-slot SNR is exponential with the given mean
/// (linear ratio) and the slot carries log2(1 + snr) bits.
struct RayleighFading {
  double mean_snr = 1.0;
};

struct RateAtom {
  double rate = 0.0;  // bits
  double prob = 0.0;
};

/// Finite rate distribution. Only used as an analytic oracle.
struct DiscreteTest {
  std::vector<RateAtom> atoms;
};

/// Distribution of the mutual information R carried by one link in one slot.
class ChannelModel {
 public:
  static ChannelModel rayleigh(double mean_snr);
  static ChannelModel discrete(std::vector<RateAtom> atoms);
  /// Decodes a whole packet of entropy h0 with probability p, nothing otherwise.
  static ChannelModel bernoulli(double h0, double p);

  bool is_continuous() const noexcept {
    return std::holds_alternative<RayleighFading>(kind_);
  }
  const std::variant<RayleighFading, DiscreteTest>& kind() const noexcept { return kind_; }

  /// P(R <= x).
  double cdf(double x) const;
  /// P(R < x). Coincides with cdf() for continuous models.
  double cdf_below(double x) const;
  /// Inverse-transform sample from u in (0, 1).
  double quantile(double u) const;

  bool operator==(const ChannelModel&) const = default;

 private:
  explicit ChannelModel(std::variant<RayleighFading, DiscreteTest> kind)
      : kind_(std::move(kind)) {}

  std::variant<RayleighFading, DiscreteTest> kind_;
};

bool operator==(const RayleighFading& a, const RayleighFading& b);
bool operator==(const RateAtom& a, const RateAtom& b);
bool operator==(const DiscreteTest& a, const DiscreteTest& b);

double sample_rate(const ChannelModel& model, RandomStream& rng);
/// Exact P(R <= x); throws std::domain_error for negative x.
double rate_cdf(const ChannelModel& model, double x);

/// Non-decoding probabilities of accumulated information on a grid over
/// [0, h0]: value(m, i) = P(R_1 + ... + R_m < i * grid_step), with the m = 0
/// row fixed at 1. Rows past the last stored one are identically zero (the
/// build stops once a row underflows).
class CdfTable {
 public:
  CdfTable(double h0, double grid_step, int max_order, std::vector<std::vector<double>> rows);

  double h0() const noexcept { return h0_; }
  double grid_step() const noexcept { return grid_step_; }
  int max_order() const noexcept { return max_order_; }
  int cells() const noexcept { return cells_; }
  /// Highest order with a stored (possibly nonzero) row.
  int stored_order() const noexcept { return static_cast<int>(rows_.size()) - 1; }

  double value(int m, int i) const;
  double at_h0(int m) const { return value(m, cells_); }
  /// Row m over the grid; empty span for rows past stored_order().
  std::span<const double> row(int m) const;

  /// F^(m)(h0) for m = 0..stored_order().
  std::vector<double> h0_column() const;

 private:
  double h0_;
  double grid_step_;
  int max_order_;
  int cells_;
  std::vector<std::vector<double>> rows_;
};

inline constexpr int kDefaultGridCells = 1024;
inline constexpr int kDefaultMaxOrder = 512;

/// m-fold convolution table. Continuous models use a Stieltjes trapezoid rule
/// against exact single-slot cell masses; discrete models are enumerated
/// exactly. Throws ConfigError for nonpositive h0/grid_step, fewer than 64
/// cells, a step that does not divide h0, or max_order < 1.
CdfTable build_cdf_table(const ChannelModel& model, double h0, double grid_step, int max_order);
CdfTable build_cdf_table(const ChannelModel& model, double h0);

/// F^(m)(H0) for one link, the only slice the routing formulas evaluate.
class DecodeCurve {
 public:
  DecodeCurve() = default;
  explicit DecodeCurve(std::vector<double> below, int max_order);
  explicit DecodeCurve(const CdfTable& table);

  /// P(m slots of accumulation do not reach H0); zero past the stored tail.
  double operator[](int m) const noexcept {
    return m < static_cast<int>(below_.size()) ? below_[static_cast<std::size_t>(m)] : 0.0;
  }
  int stored_order() const noexcept { return static_cast<int>(below_.size()) - 1; }
  int max_order() const noexcept { return max_order_; }

 private:
  std::vector<double> below_{1.0};
  int max_order_ = kDefaultMaxOrder;
};

/// Product over a neighborhood of F_j^(M)(H0). Exceeding 1e-12 means the
/// truncated series lose non-negligible mass.
double truncation_residual(std::span<const DecodeCurve* const> curves);
inline constexpr double kTruncationWarnLevel = 1e-12;

}  // namespace divbar
