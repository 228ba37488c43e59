#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "divbar/channel.hpp"

namespace divbar {

struct Link {
  int from = 0;
  int to = 0;
  ChannelModel model = ChannelModel::rayleigh(1.0);
};

/// Exogenous traffic: `rate` packets/slot enter `source` bound for `commodity`.
struct Arrival {
  int source = 0;
  int commodity = 0;
  double rate = 0.0;
};

/// Static network description. Construction never throws on semantic problems
/// (self-links, bad rates, ...); those are reported by validate(). Accessors
/// that index by node id throw std::out_of_range for unknown ids.
class Topology {
 public:
  Topology() = default;
  Topology(int nodes, double h0, int a_max, std::vector<Link> links, std::vector<Arrival> arrivals);

  int node_count() const noexcept { return nodes_; }
  double h0() const noexcept { return h0_; }
  int a_max() const noexcept { return a_max_; }
  const std::vector<Link>& links() const noexcept { return links_; }
  const std::vector<Arrival>& arrivals() const noexcept { return arrivals_; }

  /// Ascending ids of k with a link (n, k).
  const std::vector<int>& neighbors(int n) const;
  /// Channel of link (n, k); throws std::out_of_range if absent.
  const ChannelModel& channel(int n, int k) const;
  bool has_link(int n, int k) const;

  /// Destination ids appearing in the arrival list, ascending.
  const std::vector<int>& commodities() const noexcept { return commodities_; }
  /// Total rate of arrivals at n for commodity c (0 when undeclared).
  double lambda(int n, int c) const;
  /// Distinct (source, commodity) pairs with declared traffic, sorted.
  std::vector<std::pair<int, int>> traffic_pairs() const;

  Topology scaled(double multiplier) const;
  Topology with_h0(double h0) const;

 private:
  void index();

  int nodes_ = 0;
  double h0_ = 1.0;
  int a_max_ = 1;
  std::vector<Link> links_;
  std::vector<Arrival> arrivals_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::vector<int>> link_index_;  // [n][position in neighbors_[n]]
  std::vector<int> commodities_;
};

/// Every violated invariant, in a fixed order. Empty means valid.
std::vector<std::string> validate(const Topology& topo);

enum class ArrivalProcess { kBernoulliBatch, kPoisson };
enum class LoserLedger { kRetain, kClear };

/// Contents of a scenario file.
struct Scenario {
  Topology topology;
  std::uint64_t seed = 1;
  long long slots = 10000;
  ArrivalProcess arrival_process = ArrivalProcess::kBernoulliBatch;
  LoserLedger mia_loser_ledger = LoserLedger::kRetain;
};

/// JSON scenario files. Links take `mean_snr` (linear), `mean_snr_db`, or
/// `atoms` ([[rate, prob], ...]). Throws ConfigError with a location hint.
Scenario parse_scenario(const std::string& text);
/// Reads and parses; a missing or unreadable file names the path in the error.
Scenario load_scenario(const std::string& path);
/// Canonical form: fixed key order, linear SNR, %.17g numbers. Parsing the
/// output and serializing again reproduces it byte for byte.
std::string serialize_scenario(const Scenario& scenario);

}  // namespace divbar
