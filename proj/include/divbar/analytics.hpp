#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "divbar/channel.hpp"
#include "divbar/engine.hpp"
#include "divbar/metrics.hpp"
#include "divbar/policy.hpp"
#include "divbar/topology.hpp"

namespace divbar {

inline constexpr int kMaxEnumeratedNeighbors = 12;

/// Decode-set probabilities of one transmitter's neighborhood. Sets are
/// NeighborMasks over neighbor positions.
class DecodeSetProbs {
 public:
  int size() const noexcept { return k_; }
  /// P(first successful receiver set of an RMIA epoch = omega); 0 for omega = 0.
  double rmia(NeighborMask omega) const { return q_rmia_.at(omega); }
  /// Per-slot P(the receivers decoding REP-wise are exactly psi); psi = 0 allowed.
  double rep(NeighborMask psi) const { return q_rep_.at(psi); }
  /// P(RMIA epoch ends with set omega while psi decodes from the final slot
  /// alone); 0 unless psi is a subset of omega.
  double rep_rmia(NeighborMask psi, NeighborMask omega) const;
  double expected_epoch_length() const noexcept { return epoch_length_; }
  double beta() const noexcept { return 1.0 / epoch_length_; }
  /// Majorant of the epoch-length series remainder beyond the stored order.
  double epoch_length_tail() const noexcept { return tail_; }
  bool continuous() const noexcept { return continuous_; }

  friend DecodeSetProbs compute_decode_set_probs(std::span<const DecodeCurve> curves,
                                                 bool continuous);

 private:
  int k_ = 0;
  std::vector<double> q_rmia_;
  std::vector<double> q_rep_;
  std::vector<double> q_pair_;  // base-3 digit per receiver: 0 out, 1 omega only, 2 psi
  double epoch_length_ = 1.0;
  double tail_ = 0.0;
  bool continuous_ = true;
};

/// Series evaluation over m = 1..M. Throws UnsupportedSize above
/// kMaxEnumeratedNeighbors and std::domain_error for an empty neighborhood.
DecodeSetProbs compute_decode_set_probs(std::span<const DecodeCurve> curves,
                                        bool continuous = true);

struct EpochLength {
  double value = 0.0;
  double tail_bound = 0.0;
};
/// E{T} = sum_m prod_j F_j^(m-1)(H0) with the geometric tail majorant.
EpochLength expected_epoch_length(std::span<const DecodeCurve> curves);

/// RMIA forwarding probabilities reproducing the flows of a REP stationary
/// policy. Alpha is copied. Zero-probability sets of discrete channels keep
/// the REP theta; for continuous neighborhoods they are a numeric fault.
StationaryPolicy derive_rmia_policy(const StationaryPolicy& rep, const Topology& topo,
                                    const std::vector<DecodeSetProbs>& probs);

/// Backlog-blind REP policy for oracle checks: alpha splits `alpha_total`
/// evenly over commodities that are not n, theta(psi) spreads `theta_total`
/// over psi with weights drawn from `seed`.
StationaryPolicy random_rep_policy(const Topology& topo, std::uint64_t seed,
                                   double alpha_total = 0.9, double theta_total = 0.9);

/// Flow increase on link (n, k) when switching REP to RMIA under the same
/// alpha: alpha * beta * sum over omega containing k of q(empty, omega).
double rmia_gain(const DecodeSetProbs& probs, double alpha, int k_position);
/// Independent closed form of the same sum (without alpha * beta):
/// sum_m [F_k^(m-1) F_k - F_k^(m)] prod_{j != k} F_j^(m-1) F_j.
double zero_rep_decode_series(std::span<const DecodeCurve> curves, int k_position);

/// b[n][k][c] in packets/slot.
class FlowRateMatrix {
 public:
  FlowRateMatrix() = default;
  explicit FlowRateMatrix(int nodes)
      : n_(nodes), b_(static_cast<std::size_t>(nodes) * nodes * nodes, 0.0) {}
  double operator()(int n, int k, int c) const { return b_[idx(n, k, c)]; }
  double& operator()(int n, int k, int c) { return b_[idx(n, k, c)]; }
  int node_count() const noexcept { return n_; }

 private:
  std::size_t idx(int n, int k, int c) const {
    return (static_cast<std::size_t>(n) * n_ + static_cast<std::size_t>(k)) * n_ +
           static_cast<std::size_t>(c);
  }
  int n_ = 0;
  std::vector<double> b_;
};

/// Scheduled flow rates of a stationary policy: REP counts per-slot decode
/// sets, RMIA counts epoch-final sets at rate beta.
FlowRateMatrix flow_rates(const StationaryPolicy& policy, const Topology& topo,
                          const std::vector<DecodeSetProbs>& probs, Mode mode);

struct NodeSlack {
  int node = 0;
  int commodity = 0;
  double slack = 0.0;  // outflow - inflow - lambda
};
struct FeasibilityReport {
  bool feasible = true;
  std::vector<NodeSlack> slack;
  std::vector<std::string> violations;
};
/// Flow conservation with exogenous input at every non-destination node, plus
/// the structural constraints (nonnegative, only on links, none out of the
/// destination, none on self-pairs).
FeasibilityReport check_feasibility(const Topology& topo, const FlowRateMatrix& b,
                                    double tolerance = 1e-12);

enum class Verdict { kStable, kUnstable, kInconclusive };
std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& s);

struct StabilityDetail {
  Verdict verdict = Verdict::kInconclusive;
  double third_quarter_mean = 0.0;
  double last_quarter_mean = 0.0;
  double slope = 0.0;
  double slope_t = 0.0;
  double worst_delivery_ratio = 1.0;
};

inline constexpr long long kMinStabilitySlots = 10000;

/// Stable: last-quarter mean <= 1.1 x third-quarter mean and every commodity
/// delivers >= 0.98 of its offered rate. Unstable: least-squares slope over
/// the second half positive with t > 4. Otherwise, or under 10^4 slots,
/// inconclusive.
StabilityDetail stability_detail(const MetricsSeries& series);
Verdict stability_verdict(const MetricsSeries& series);

struct SweepRow {
  std::string policy;
  double rate_multiplier = 0.0;
  double lambda_effective = 0.0;  // total offered packets/slot
  double time_avg_occupancy = 0.0;
  std::vector<int> commodities;
  std::vector<double> delivered_rate;  // per commodity
  Verdict verdict = Verdict::kInconclusive;
  std::uint64_t seed = 0;
  long long slots = 0;
};

/// One replica at a multiplier, summarized as a sweep row.
SweepRow run_sweep_point(const SimConfig& base, double multiplier, int replica);

struct BisectionResult {
  double max_stable_multiplier = 0.0;
  std::vector<SweepRow> rows;
};
struct BisectionOptions {
  double lo = 0.0;
  double hi = 1.0;
  int iterations = 8;
  int replicas = 3;
  int jobs = 1;
};
/// Largest multiplier of the whole lambda matrix found Stable by a majority
/// of replicas (seeds base.seed + r).
BisectionResult max_stable_rate_search(const SimConfig& base, const BisectionOptions& opt);

/// Runs f(i) for i in [0, count) over `jobs` threads; results keep index order.
template <typename T, typename F>
std::vector<T> parallel_map(std::size_t count, int jobs, F&& f);

}  // namespace divbar

#include "divbar/detail/parallel.hpp"
