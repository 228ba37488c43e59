#include "divbar/monte_carlo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "divbar/analytics.hpp"

namespace divbar {
namespace {

std::size_t code_of(NeighborMask psi, NeighborMask omega, int k) {
  std::size_t code = 0;
  std::size_t place = 1;
  for (int j = 0; j < k; ++j) {
    code += place * (((psi >> j) & 1U) ? 2 : (((omega >> j) & 1U) ? 1 : 0));
    place *= 3;
  }
  return code;
}

}  // namespace

double EpochSample::length_sigma_of_mean() const {
  const double n = static_cast<double>(epochs);
  const double m = length_sum / n;
  const double var = std::max(length_sq_sum / n - m * m, 0.0);
  return std::sqrt(var / n);
}

long long EpochSample::pair_count(NeighborMask psi, NeighborMask omega) const {
  if ((psi & ~omega) != 0) return 0;
  return pair.at(code_of(psi, omega, k));
}

EpochSample simulate_epochs(std::span<const ChannelModel> models, double h0, long long epochs,
                            std::uint64_t seed, std::span<const int> ranking) {
  const int k = static_cast<int>(models.size());
  if (k == 0) throw std::domain_error("simulate_epochs: empty neighborhood");
  if (k > kMaxEnumeratedNeighbors) throw std::invalid_argument("simulate_epochs: too many neighbors");
  std::vector<int> order(ranking.begin(), ranking.end());
  if (order.empty()) {
    order.resize(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
  }
  EpochSample s;
  s.k = k;
  const std::size_t subsets = std::size_t{1} << k;
  std::size_t codes = 1;
  for (int j = 0; j < k; ++j) codes *= 3;
  s.omega.assign(subsets, 0);
  s.pair.assign(codes, 0);
  s.rep_sets.assign(subsets, 0);
  s.zero_rep.assign(static_cast<std::size_t>(k), 0);
  s.top_ranked.assign(static_cast<std::size_t>(k), 0);

  std::vector<RandomStream> rng;
  for (int j = 0; j < k; ++j) {
    rng.emplace_back(seed, StreamDomain::kOracle, static_cast<std::uint64_t>(j));
  }
  std::vector<double> acc(static_cast<std::size_t>(k));
  for (long long e = 0; e < epochs; ++e) {
    std::fill(acc.begin(), acc.end(), 0.0);
    long long len = 0;
    NeighborMask omega = 0;
    NeighborMask psi = 0;
    while (omega == 0) {
      psi = 0;
      for (int j = 0; j < k; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        const double r = models[jj].quantile(rng[jj].uniform());
        if (r >= h0) psi |= NeighborMask{1} << j;
        acc[jj] += r;
        if (acc[jj] >= h0) omega |= NeighborMask{1} << j;
      }
      ++s.rep_sets[psi];
      ++len;
    }
    ++s.omega[omega];
    ++s.pair[code_of(psi, omega, k)];
    if (psi == 0) {
      for (int j = 0; j < k; ++j) {
        if ((omega >> j) & 1U) ++s.zero_rep[static_cast<std::size_t>(j)];
      }
    }
    for (int pos : order) {
      if ((omega >> pos) & 1U) {
        ++s.top_ranked[static_cast<std::size_t>(pos)];
        break;
      }
    }
    s.slots += len;
    s.length_sum += static_cast<double>(len);
    s.length_sq_sum += static_cast<double>(len) * static_cast<double>(len);
  }
  s.epochs = epochs;
  return s;
}

double empirical_sum_below(const ChannelModel& model, double h0, int m, long long samples,
                           std::uint64_t seed) {
  RandomStream rng(seed, StreamDomain::kOracle, 1000 + static_cast<std::uint64_t>(m));
  long long hits = 0;
  for (long long i = 0; i < samples; ++i) {
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += model.quantile(rng.uniform());
    if (sum < h0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples);
}

double binomial_sigma(double p, long long n) {
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
}

double FlowSample::mean(int k_pos, std::size_t ci) const {
  double s = 0.0;
  const std::size_t idx = static_cast<std::size_t>(k_pos) * commodities.size() + ci;
  for (const auto& b : batch_rates) s += b[idx];
  return s / static_cast<double>(batch_rates.size());
}

double FlowSample::sigma(int k_pos, std::size_t ci) const {
  const std::size_t idx = static_cast<std::size_t>(k_pos) * commodities.size() + ci;
  const double m = mean(k_pos, ci);
  double ss = 0.0;
  for (const auto& b : batch_rates) ss += (b[idx] - m) * (b[idx] - m);
  const double nb = static_cast<double>(batch_rates.size());
  return std::sqrt(ss / (nb - 1.0) / nb);
}

FlowSample simulate_stationary_flows(int n, std::span<const int> ids,
                                     std::span<const ChannelModel> models, double h0,
                                     const StationaryPolicy& policy,
                                     std::span<const int> commodities, Mode mode,
                                     long long slots, int batches, std::uint64_t seed) {
  if (mode == Mode::kMia) throw std::invalid_argument("flow oracle: REP or RMIA only");
  if (batches < 2 || slots < batches) throw std::invalid_argument("flow oracle: bad batching");
  const std::size_t k = ids.size();
  const std::size_t cc = commodities.size();
  FlowSample out;
  out.slots = slots;
  out.batches = batches;
  out.commodities.assign(commodities.begin(), commodities.end());
  out.batch_rates.assign(static_cast<std::size_t>(batches), std::vector<double>(k * cc, 0.0));

  std::vector<RandomStream> link;
  for (int id : ids) {
    link.emplace_back(seed, StreamDomain::kChannel, static_cast<std::uint64_t>(n),
                      static_cast<std::uint64_t>(id));
  }
  const RandomStream pol(seed, StreamDomain::kPolicy, static_cast<std::uint64_t>(n));
  const long long per_batch = slots / batches;

  std::vector<double> acc(k, 0.0);
  bool live = false;
  std::uint64_t epoch = 0;
  int ci = -1;
  for (long long t = 1; t <= per_batch * batches; ++t) {
    if (!live) {
      live = true;
      const double u = pol.uniform_at(2 * epoch);
      ci = -1;
      double cum = 0.0;
      for (std::size_t i = 0; i < cc; ++i) {
        cum += policy.alpha_of(n, commodities[i]);
        if (u < cum) {
          ci = static_cast<int>(i);
          break;
        }
      }
      std::fill(acc.begin(), acc.end(), 0.0);
    }
    NeighborMask done = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double r = models[j].quantile(link[j].uniform_at(static_cast<std::uint64_t>(t)));
      acc[j] += r;
      const bool ok = mode == Mode::kRep ? r >= h0 : acc[j] >= h0;
      if (ok) done |= NeighborMask{1} << j;
    }
    if (done == 0) continue;
    if (ci >= 0) {
      const int c = commodities[static_cast<std::size_t>(ci)];
      const auto theta = policy.theta_of(n, c, done, k);
      const double u = pol.uniform_at(2 * epoch + 1);
      double cum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (!((done >> j) & 1U)) continue;
        cum += theta[j];
        if (u < cum) {
          const auto b = static_cast<std::size_t>((t - 1) / per_batch);
          out.batch_rates[b][j * cc + static_cast<std::size_t>(ci)] += 1.0;
          break;
        }
      }
    }
    live = false;
    ++epoch;
  }
  for (auto& b : out.batch_rates) {
    for (double& v : b) v /= static_cast<double>(per_batch);
  }
  return out;
}

double coupled_difference_sigma(const FlowSample& a, const FlowSample& b, int k_pos,
                                std::size_t ci) {
  const std::size_t idx = static_cast<std::size_t>(k_pos) * a.commodities.size() + ci;
  const std::size_t nb = a.batch_rates.size();
  std::vector<double> d(nb);
  double m = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    d[i] = a.batch_rates[i][idx] - b.batch_rates[i][idx];
    m += d[i];
  }
  m /= static_cast<double>(nb);
  double ss = 0.0;
  for (double x : d) ss += (x - m) * (x - m);
  return std::sqrt(ss / (static_cast<double>(nb) - 1.0) / static_cast<double>(nb));
}

}  // namespace divbar
