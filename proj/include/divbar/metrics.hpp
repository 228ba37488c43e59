#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace divbar {

/// Per-slot occupancy and delivery counts of one run. The wide per-queue
/// columns are only kept when a run asks for detail.
struct MetricsSeries {
  long long slots = 0;
  std::vector<int> nodes;                   // row order of per-queue columns
  std::vector<int> commodities;             // column order of per-queue columns
  std::vector<std::pair<int, int>> pairs;   // (source, commodity) delivery counters
  std::vector<double> offered;              // lambda per pair

  std::vector<long long> occupancy;         // one entry per slot
  std::vector<long long> delivered_final;   // per pair
  bool detailed = false;
  std::vector<std::vector<long long>> queue;      // [slot][node * C + commodity index]
  std::vector<std::vector<long long>> delivered;  // [slot][pair index]

  double time_avg_occupancy() const;
  double delivered_rate(std::size_t pair) const;
  /// Delivered and offered rates summed over all sources of commodity c.
  double delivered_rate_commodity(int c) const;
  double offered_rate_commodity(int c) const;
};

}  // namespace divbar
