#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "divbar/analytics.hpp"
#include "divbar/channel.hpp"
#include "divbar/metrics.hpp"

namespace divbar {

inline constexpr char kCsvVersionLine[] = "# divbar-sim v1";

/// 9 significant digits, the precision every CSV uses.
std::string format_number(double v);

/// Columns: slot, occupancy_total, q_<node>_<commodity>..., then
/// delivered_<source>_<commodity>... (cumulative). Needs a detailed series.
void write_metrics_csv(std::ostream& out, const MetricsSeries& series);

/// Columns: policy, rate_multiplier, lambda_effective, time_avg_occupancy,
/// delivered_rate_<c>..., verdict, seed, slots. All rows must share commodities.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
/// Throws ConfigError on a missing version line or malformed row.
std::vector<SweepRow> read_sweep_csv(std::istream& in);

/// Columns: m, x_0 ... x_n (grid values) for m = 0..max_order.
void write_table_csv(std::ostream& out, const CdfTable& table);

}  // namespace divbar
