#include "divbar/csv.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "divbar/errors.hpp"

namespace divbar {
namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("sweep CSV: bad number '" + s + "' in " + what);
  }
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_metrics_csv(std::ostream& out, const MetricsSeries& s) {
  if (!s.detailed) throw std::invalid_argument("metrics CSV needs a detailed series");
  out << kCsvVersionLine << '\n' << "slot,occupancy_total";
  for (int n : s.nodes) {
    for (int c : s.commodities) out << ",q_" << n << '_' << c;
  }
  for (const auto& [n, c] : s.pairs) out << ",delivered_" << n << '_' << c;
  out << '\n';
  std::string line;
  for (std::size_t t = 0; t < s.occupancy.size(); ++t) {
    line = std::to_string(t + 1);
    line += ',';
    line += std::to_string(s.occupancy[t]);
    for (long long q : s.queue[t]) {
      line += ',';
      line += std::to_string(q);
    }
    for (long long d : s.delivered[t]) {
      line += ',';
      line += std::to_string(d);
    }
    line += '\n';
    out << line;
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  std::vector<int> commodities;
  if (!rows.empty()) commodities = rows.front().commodities;
  out << kCsvVersionLine << '\n'
      << "policy,rate_multiplier,lambda_effective,time_avg_occupancy";
  for (int c : commodities) out << ",delivered_rate_" << c;
  out << ",verdict,seed,slots\n";
  for (const auto& r : rows) {
    if (r.commodities != commodities) {
      throw std::invalid_argument("sweep rows disagree on commodity columns");
    }
    out << r.policy << ',' << format_number(r.rate_multiplier) << ','
        << format_number(r.lambda_effective) << ',' << format_number(r.time_avg_occupancy);
    for (double d : r.delivered_rate) out << ',' << format_number(d);
    out << ',' << to_string(r.verdict) << ',' << r.seed << ',' << r.slots << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(kCsvVersionLine, 0) != 0) {
    throw ConfigError("sweep CSV: missing version line");
  }
  if (!std::getline(in, line)) throw ConfigError("sweep CSV: missing header");
  const auto header = split(line, ',');
  if (header.size() < 7 || header[0] != "policy" || header[1] != "rate_multiplier" ||
      header[2] != "lambda_effective" || header[3] != "time_avg_occupancy" ||
      header[header.size() - 3] != "verdict" || header[header.size() - 2] != "seed" ||
      header.back() != "slots") {
    throw ConfigError("sweep CSV: unexpected header");
  }
  std::vector<int> commodities;
  const std::string prefix = "delivered_rate_";
  for (std::size_t i = 4; i + 3 < header.size(); ++i) {
    if (header[i].rfind(prefix, 0) != 0) throw ConfigError("sweep CSV: bad column " + header[i]);
    commodities.push_back(static_cast<int>(to_double(header[i].substr(prefix.size()), "header")));
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) throw ConfigError("sweep CSV: wrong field count");
    SweepRow r;
    r.policy = f[0];
    r.rate_multiplier = to_double(f[1], "rate_multiplier");
    r.lambda_effective = to_double(f[2], "lambda_effective");
    r.time_avg_occupancy = to_double(f[3], "time_avg_occupancy");
    r.commodities = commodities;
    for (std::size_t i = 0; i < commodities.size(); ++i) {
      r.delivered_rate.push_back(to_double(f[4 + i], "delivered_rate"));
    }
    r.verdict = parse_verdict(f[f.size() - 3]);
    r.seed = std::stoull(f[f.size() - 2]);
    r.slots = std::stoll(f.back());
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_table_csv(std::ostream& out, const CdfTable& table) {
  out << kCsvVersionLine << '\n' << "m";
  for (int i = 0; i <= table.cells(); ++i) out << ",x_" << i;
  out << '\n';
  for (int m = 0; m <= table.max_order(); ++m) {
    out << m;
    for (int i = 0; i <= table.cells(); ++i) out << ',' << format_number(table.value(m, i));
    out << '\n';
    if (m > table.stored_order()) break;  // the rest are all zero
  }
}

}  // namespace divbar
