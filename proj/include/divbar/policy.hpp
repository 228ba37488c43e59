#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "divbar/channel.hpp"
#include "divbar/queueing.hpp"
#include "divbar/rng.hpp"
#include "divbar/topology.hpp"

namespace divbar {

enum class PolicyKind { kDivbarRep, kDivbarRmia, kDivbarMia, kStationaryRandomized };

std::string to_string(PolicyKind kind);
/// Accepts rep, rmia, mia, stationary. Throws ConfigError otherwise.
PolicyKind parse_policy_kind(const std::string& name);
/// Transmission scheme a policy runs on. Stationary policies need it given.
Mode mode_of(PolicyKind kind);

/// Bitmask over a node's neighbor positions (bit i = i-th neighbor in
/// ascending id order).
using NeighborMask = std::uint32_t;

/// Backlog-independent policy: alpha[n][c] picks the commodity at each epoch
/// start (idle with the residual), theta(n, c, ackSet) picks the forwarder
/// (retain with the residual). theta vectors are indexed by neighbor position.
struct StationaryPolicy {
  std::vector<std::vector<double>> alpha;
  std::map<std::tuple<int, int, NeighborMask>, std::vector<double>> theta;

  double alpha_of(int n, int c) const;
  /// Zero vector of the neighborhood size when the entry is absent.
  std::vector<double> theta_of(int n, int c, NeighborMask mask, std::size_t neighbors) const;
};

/// Every violated probability constraint; empty when valid.
std::vector<std::string> validate(const StationaryPolicy& policy, const Topology& topo);

/// F^(m)(H0) per link, grouped by transmitter in neighbor order.
struct LinkCurves {
  double h0 = 1.0;
  std::vector<std::vector<DecodeCurve>> by_node;
  std::vector<std::vector<bool>> continuous;

  const std::vector<DecodeCurve>& of(int n) const { return by_node.at(static_cast<std::size_t>(n)); }
};

/// Builds one table per distinct channel model in the topology.
std::shared_ptr<const LinkCurves> build_link_curves(const Topology& topo,
                                                    int grid_cells = kDefaultGridCells,
                                                    int max_order = kDefaultMaxOrder);

long long differential_backlog(const BacklogSnapshot& snap, int n, int k, int c);

/// Receivers ranked by W descending, ascending id on ties. high[i] / low[i]
/// hold the ids ranked strictly above / below the receiver at position i.
struct PrioritySets {
  std::vector<int> ranking;  // neighbor positions, best first
  std::vector<std::vector<int>> high;
  std::vector<std::vector<int>> low;
};
PrioritySets priority_sets(std::span<const int> ids, std::span<const long long> weights);

/// Ranking positions only.
std::vector<int> rank_receivers(std::span<const int> ids, std::span<const long long> weights);

/// Probability that receiver k is the best-ranked member of the first
/// successful receiver set: sum over m of prod_high F^(m) * prod_low F^(m-1) *
/// [F_k^(m-1) - F_k^(m)]. Result indexed by neighbor position. Throws
/// std::domain_error for an empty neighborhood.
std::vector<double> phi(std::span<const DecodeCurve> curves, std::span<const int> ranking);
/// Single-slot version used by plain DIVBAR: prod_high F * (1 - F_k).
std::vector<double> phi_rep(std::span<const DecodeCurve> curves, std::span<const int> ranking);

inline constexpr int kIdle = -1;

struct EpochDecision {
  int commodity = kIdle;
  double metric = 0.0;
  std::vector<int> ranking;          // neighbor ids, best first
  std::vector<long long> weights;    // W by neighbor position at epoch start
};

/// Forwarder for the DIVBAR family: the ack'd receiver with the largest
/// positive W from the epoch-start snapshot, lowest id on ties; nullopt means
/// retain. Throws IntegrityFault for an empty ack set.
std::optional<int> choose_divbar_forwarder(const EpochDecision& decision,
                                           std::span<const int> ids, NeighborMask acks);

/// Decision procedures of one policy over one topology. Caches phi vectors by
/// ranking, so one instance belongs to one replica.
class Policy {
 public:
  Policy(PolicyKind kind, const Topology& topo, std::shared_ptr<const LinkCurves> curves,
         std::uint64_t seed, std::optional<StationaryPolicy> stationary = std::nullopt,
         Mode stationary_mode = Mode::kRmia);

  PolicyKind kind() const noexcept { return kind_; }
  Mode mode() const noexcept { return mode_; }

  /// Commodity choice at an epoch start of node n. epoch_index counts n's
  /// epochs from 0 and keys the randomized draws.
  EpochDecision choose_commodity(const BacklogSnapshot& snap, int n, std::uint64_t epoch_index);
  std::optional<int> choose_forwarder(int n, const EpochDecision& decision, NeighborMask acks,
                                      std::uint64_t epoch_index) const;

  /// phi for node n under this policy's metric, cached by ranking.
  const std::vector<double>& phi_for(int n, std::span<const int> ranking);

 private:
  PolicyKind kind_;
  Mode mode_;
  const Topology* topo_;
  std::shared_ptr<const LinkCurves> curves_;
  std::optional<StationaryPolicy> stationary_;
  std::vector<RandomStream> streams_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<double>>> phi_cache_;
};

}  // namespace divbar
