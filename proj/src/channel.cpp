#include "divbar/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "divbar/errors.hpp"

namespace divbar {
namespace {

constexpr double kUnderflowRow = 1e-300;

double relative_tol(double h0) { return 1e-12 * std::max(1.0, h0); }

// Exponent a(x) = (2^x - 1) / snr so that F(x) = 1 - exp(-a(x)).
double rayleigh_exponent(double x, double mean_snr) {
  return std::expm1(x * std::numbers::ln2) / mean_snr;
}

}  // namespace

bool operator==(const RayleighFading& a, const RayleighFading& b) {
  return a.mean_snr == b.mean_snr;
}
bool operator==(const RateAtom& a, const RateAtom& b) {
  return a.rate == b.rate && a.prob == b.prob;
}
bool operator==(const DiscreteTest& a, const DiscreteTest& b) { return a.atoms == b.atoms; }

ChannelModel ChannelModel::rayleigh(double mean_snr) {
  if (!(mean_snr > 0.0) || !std::isfinite(mean_snr)) {
    throw ConfigError("rayleigh channel needs mean_snr > 0, got " + std::to_string(mean_snr));
  }
  return ChannelModel(RayleighFading{mean_snr});
}

ChannelModel ChannelModel::discrete(std::vector<RateAtom> atoms) {
  if (atoms.empty()) throw ConfigError("discrete channel needs at least one atom");
  double total = 0.0;
  for (const auto& a : atoms) {
    if (!(a.rate >= 0.0) || !std::isfinite(a.rate)) {
      throw ConfigError("discrete channel atom rate must be >= 0");
    }
    if (!(a.prob >= 0.0)) throw ConfigError("discrete channel atom prob must be >= 0");
    total += a.prob;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("discrete channel atom probabilities sum to " + std::to_string(total));
  }
  std::sort(atoms.begin(), atoms.end(),
            [](const RateAtom& x, const RateAtom& y) { return x.rate < y.rate; });
  return ChannelModel(DiscreteTest{std::move(atoms)});
}

ChannelModel ChannelModel::bernoulli(double h0, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("bernoulli success probability outside [0,1]");
  if (p == 1.0) return discrete({{h0, 1.0}});
  if (p == 0.0) return discrete({{0.0, 1.0}});
  return discrete({{0.0, 1.0 - p}, {h0, p}});
}

double ChannelModel::cdf(double x) const {
  if (const auto* r = std::get_if<RayleighFading>(&kind_)) {
    if (x <= 0.0) return 0.0;
    return -std::expm1(-rayleigh_exponent(x, r->mean_snr));
  }
  double acc = 0.0;
  for (const auto& a : std::get<DiscreteTest>(kind_).atoms) {
    if (a.rate <= x) acc += a.prob;
  }
  return std::min(acc, 1.0);
}

double ChannelModel::cdf_below(double x) const {
  if (is_continuous()) return cdf(x);
  double acc = 0.0;
  for (const auto& a : std::get<DiscreteTest>(kind_).atoms) {
    if (a.rate < x) acc += a.prob;
  }
  return std::min(acc, 1.0);
}

double ChannelModel::quantile(double u) const {
  if (const auto* r = std::get_if<RayleighFading>(&kind_)) {
    // Inverse of the exponential snr distribution.
    const double snr = -r->mean_snr * std::log1p(-u);
    return std::log1p(snr) / std::numbers::ln2;
  }
  const auto& atoms = std::get<DiscreteTest>(kind_).atoms;
  double cum = 0.0;
  for (const auto& a : atoms) {
    cum += a.prob;
    if (u < cum) return a.rate;
  }
  return atoms.back().rate;
}

double sample_rate(const ChannelModel& model, RandomStream& rng) {
  return model.quantile(rng.uniform());
}

double rate_cdf(const ChannelModel& model, double x) {
  if (x < 0.0 || std::isnan(x)) throw std::domain_error("rate_cdf: negative argument");
  return model.cdf(x);
}

CdfTable::CdfTable(double h0, double grid_step, int max_order,
                   std::vector<std::vector<double>> rows)
    : h0_(h0),
      grid_step_(grid_step),
      max_order_(max_order),
      cells_(static_cast<int>(std::lround(h0 / grid_step))),
      rows_(std::move(rows)) {}

double CdfTable::value(int m, int i) const {
  if (m < 0 || m > max_order_ || i < 0 || i > cells_) {
    throw std::out_of_range("CdfTable index out of range");
  }
  if (m > stored_order()) return 0.0;
  return rows_[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
}

std::span<const double> CdfTable::row(int m) const {
  if (m < 0 || m > stored_order()) return {};
  return rows_[static_cast<std::size_t>(m)];
}

std::vector<double> CdfTable::h0_column() const {
  std::vector<double> col;
  col.reserve(rows_.size());
  for (const auto& r : rows_) col.push_back(r.back());
  return col;
}

namespace {

std::vector<std::vector<double>> convolve_continuous(const ChannelModel& model, double h0,
                                                     int cells, int max_order) {
  const auto n = static_cast<std::size_t>(cells);
  std::vector<double> grid_cdf(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    grid_cdf[i] = model.cdf(h0 * static_cast<double>(i) / static_cast<double>(cells));
  }
  // Cell masses of the single-slot law; first-differences of exp(-a) keep
  // precision for tiny cells.
  std::vector<double> mass(n);
  const double snr = std::get<RayleighFading>(model.kind()).mean_snr;
  for (std::size_t j = 0; j < n; ++j) {
    const double a0 = rayleigh_exponent(h0 * static_cast<double>(j) / cells, snr);
    const double a1 = rayleigh_exponent(h0 * static_cast<double>(j + 1) / cells, snr);
    mass[j] = std::exp(-a0) * -std::expm1(-(a1 - a0));
  }

  std::vector<std::vector<double>> rows;
  rows.emplace_back(n + 1, 1.0);
  rows.push_back(grid_cdf);
  std::vector<double> avg(n + 1);
  while (static_cast<int>(rows.size()) <= max_order) {
    const auto& prev = rows.back();
    if (prev[n] < kUnderflowRow) break;
    // avg[l] = trapezoid value of the previous row over [x_{l-1}, x_l].
    avg[0] = 0.0;
    for (std::size_t l = 1; l <= n; ++l) avg[l] = 0.5 * (prev[l] + prev[l - 1]);
    std::vector<double> next(n + 1, 0.0);
    for (std::size_t i = 1; i <= n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < i; ++j) acc += mass[j] * avg[i - j];
      next[i] = std::clamp(acc, 0.0, 1.0);
    }
    // Rounding can break monotonicity by an ulp; the true row is nondecreasing.
    for (std::size_t i = 1; i <= n; ++i) next[i] = std::max(next[i], next[i - 1]);
    rows.push_back(std::move(next));
  }
  if (rows.back()[n] < kUnderflowRow && rows.size() > 2) rows.pop_back();
  return rows;
}

std::vector<std::vector<double>> convolve_discrete(const ChannelModel& model, double h0,
                                                   int cells, int max_order) {
  const auto& atoms = std::get<DiscreteTest>(model.kind()).atoms;
  const double tol = relative_tol(h0);
  const auto n = static_cast<std::size_t>(cells);

  // Exact law of the partial sum restricted to values below h0.
  std::vector<std::pair<double, double>> support{{0.0, 1.0}};
  std::vector<std::vector<double>> rows;
  rows.emplace_back(n + 1, 1.0);
  for (int m = 1; m <= max_order; ++m) {
    std::vector<std::pair<double, double>> next;
    next.reserve(support.size() * atoms.size());
    for (const auto& [v, p] : support) {
      for (const auto& a : atoms) {
        const double s = v + a.rate;
        if (s < h0 - tol && a.prob > 0.0) next.emplace_back(s, p * a.prob);
      }
    }
    std::sort(next.begin(), next.end());
    support.clear();
    for (const auto& e : next) {
      if (!support.empty() && e.first - support.back().first <= tol) {
        support.back().second += e.second;
      } else {
        support.push_back(e);
      }
    }
    std::vector<double> row(n + 1, 0.0);
    std::size_t idx = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const double x = (i == n) ? h0 : h0 * static_cast<double>(i) / cells;
      while (idx < support.size() && support[idx].first < x - tol) acc += support[idx++].second;
      row[i] = std::min(acc, 1.0);
    }
    const bool underflow = row[n] < kUnderflowRow;
    if (underflow && m > 1) break;
    rows.push_back(std::move(row));
    if (underflow) break;
  }
  return rows;
}

}  // namespace

CdfTable build_cdf_table(const ChannelModel& model, double h0, double grid_step, int max_order) {
  if (!(h0 > 0.0)) throw ConfigError("cdf table: h0 must be positive");
  if (!(grid_step > 0.0)) throw ConfigError("cdf table: grid step must be positive");
  if (max_order < 1) throw ConfigError("cdf table: max order must be >= 1");
  const double ratio = h0 / grid_step;
  const long cells = std::lround(ratio);
  if (std::abs(ratio - static_cast<double>(cells)) > 1e-9 * ratio) {
    throw ConfigError("cdf table: grid step does not divide h0");
  }
  if (cells < 64) throw ConfigError("cdf table: need at least 64 grid cells");
  auto rows = model.is_continuous()
                  ? convolve_continuous(model, h0, static_cast<int>(cells), max_order)
                  : convolve_discrete(model, h0, static_cast<int>(cells), max_order);
  return CdfTable(h0, grid_step, max_order, std::move(rows));
}

CdfTable build_cdf_table(const ChannelModel& model, double h0) {
  return build_cdf_table(model, h0, h0 / kDefaultGridCells, kDefaultMaxOrder);
}

DecodeCurve::DecodeCurve(std::vector<double> below, int max_order)
    : below_(std::move(below)), max_order_(max_order) {
  if (below_.empty()) below_.push_back(1.0);
}

DecodeCurve::DecodeCurve(const CdfTable& table)
    : DecodeCurve(table.h0_column(), table.max_order()) {}

double truncation_residual(std::span<const DecodeCurve* const> curves) {
  double prod = 1.0;
  for (const auto* c : curves) prod *= (*c)[c->max_order()];
  return curves.empty() ? 1.0 : prod;
}

}  // namespace divbar
