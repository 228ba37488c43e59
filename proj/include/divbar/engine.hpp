#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "divbar/metrics.hpp"
#include "divbar/policy.hpp"
#include "divbar/queueing.hpp"
#include "divbar/topology.hpp"

namespace divbar {

struct InitialPacket {
  int node = 0;
  int commodity = 0;
};

/// Everything one observed slot did, for property checks.
struct SlotReport {
  long long slot = 0;
  BacklogSnapshot before;
  BacklogSnapshot after;
  std::vector<Transfer> transfers;
  std::vector<ArrivalCount> arrivals;
  std::vector<Packet> delivered;
};

struct DeliveryRecord {
  PacketId packet = 0;
  int source = 0;
  int commodity = 0;
  long long created_slot = 0;
  long long slot = 0;
};

struct SimConfig {
  Topology topology;
  PolicyKind policy = PolicyKind::kDivbarRmia;
  long long slots = 10000;
  std::uint64_t seed = 1;
  ArrivalProcess arrival_process = ArrivalProcess::kBernoulliBatch;
  LoserLedger mia_loser_ledger = LoserLedger::kRetain;

  std::optional<StationaryPolicy> stationary;
  Mode stationary_mode = Mode::kRmia;
  /// Built from the topology when null; pass a shared set to skip rebuilds.
  std::shared_ptr<const LinkCurves> curves;

  std::vector<InitialPacket> initial_packets;  // queued before slot 1
  bool record_detail = true;
  bool check_invariants = false;
  std::ostream* trace = nullptr;
  std::function<void(const SlotReport&)> observer;
};

SimConfig make_sim_config(const Scenario& scenario, PolicyKind policy);

struct SimResult {
  MetricsSeries metrics;
  Network final_state;
  std::vector<DeliveryRecord> deliveries;
  long long epochs_ended = 0;
};

/// Runs slots 1..config.slots. Throws ConfigError for an invalid topology and
/// IntegrityFault when a queue invariant breaks.
SimResult run(const SimConfig& config);

/// Arrival counts of one slot, drawn from each (source, commodity) stream.
std::vector<ArrivalCount> draw_arrivals(const Topology& topo, ArrivalProcess process,
                                        std::uint64_t seed, long long slot);

inline constexpr char kTraceHeader[] = "slot,node,event,commodity,packet,detail";

}  // namespace divbar
