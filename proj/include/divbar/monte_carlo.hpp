#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "divbar/channel.hpp"
#include "divbar/policy.hpp"
#include "divbar/queueing.hpp"

namespace divbar {

/// Event counts from simulating RMIA epochs of one transmitter by direct
/// sampling. Uses no CDF table.
struct EpochSample {
  int k = 0;
  long long epochs = 0;
  long long slots = 0;
  std::vector<long long> omega;       // by first successful receiver set
  std::vector<long long> pair;        // by (psi, omega), base-3 code as in DecodeSetProbs
  std::vector<long long> rep_sets;    // by per-slot REP decode set, all slots
  std::vector<long long> zero_rep;    // per k: epochs with psi empty and k in omega
  std::vector<long long> top_ranked;  // per k: k is the best-ranked member of omega
  double length_sum = 0.0;
  double length_sq_sum = 0.0;

  double length_mean() const { return length_sum / static_cast<double>(epochs); }
  double length_sigma_of_mean() const;
  long long pair_count(NeighborMask psi, NeighborMask omega) const;
};

/// `ranking` (neighbor positions, best first) decides the top_ranked counter;
/// pass an empty span for ascending positions.
EpochSample simulate_epochs(std::span<const ChannelModel> models, double h0, long long epochs,
                            std::uint64_t seed, std::span<const int> ranking = {});

/// Empirical frequency of R_1 + ... + R_m < h0 over `samples` draws.
double empirical_sum_below(const ChannelModel& model, double h0, int m, long long samples,
                           std::uint64_t seed);

/// Binomial standard error sqrt(p (1 - p) / n).
double binomial_sigma(double p, long long n);

/// Forwarding-rate estimates of one transmitter under a stationary policy,
/// counting scheduled forwards whether or not a packet would be queued.
struct FlowSample {
  long long slots = 0;
  int batches = 0;
  /// batch_rates[b][k * C + ci]: forwards per slot in batch b.
  std::vector<std::vector<double>> batch_rates;
  std::vector<int> commodities;

  double mean(int k_pos, std::size_t ci) const;
  double sigma(int k_pos, std::size_t ci) const;
};

/// Slots are grouped in `batches` equal batches for batch-means errors.
/// Channel draws of link (n, k) at slot t depend only on (seed, n, k, t), so
/// two calls with different modes see the same channel realization.
FlowSample simulate_stationary_flows(int n, std::span<const int> ids,
                                     std::span<const ChannelModel> models, double h0,
                                     const StationaryPolicy& policy,
                                     std::span<const int> commodities, Mode mode,
                                     long long slots, int batches, std::uint64_t seed);

/// Batch-means sigma of the difference between two coupled flow samples.
double coupled_difference_sigma(const FlowSample& a, const FlowSample& b, int k_pos,
                                std::size_t ci);

}  // namespace divbar
