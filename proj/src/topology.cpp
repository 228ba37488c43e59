#include "divbar/topology.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace divbar {

Topology::Topology(int nodes, double h0, int a_max, std::vector<Link> links,
                   std::vector<Arrival> arrivals)
    : nodes_(nodes), h0_(h0), a_max_(a_max), links_(std::move(links)),
      arrivals_(std::move(arrivals)) {
  index();
}

void Topology::index() {
  const auto n = static_cast<std::size_t>(std::max(nodes_, 0));
  neighbors_.assign(n, {});
  link_index_.assign(n, {});
  std::vector<std::vector<std::pair<int, int>>> by_node(n);
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const auto& l = links_[i];
    if (l.from < 0 || l.from >= nodes_ || l.to < 0 || l.to >= nodes_ || l.from == l.to) continue;
    by_node[static_cast<std::size_t>(l.from)].emplace_back(l.to, static_cast<int>(i));
  }
  for (std::size_t v = 0; v < n; ++v) {
    auto& entries = by_node[v];
    std::sort(entries.begin(), entries.end());
    for (const auto& [to, idx] : entries) {
      // Duplicates are a validation error; the first declaration wins here.
      if (!neighbors_[v].empty() && neighbors_[v].back() == to) continue;
      neighbors_[v].push_back(to);
      link_index_[v].push_back(idx);
    }
  }
  std::set<int> dest;
  for (const auto& a : arrivals_) dest.insert(a.commodity);
  commodities_.assign(dest.begin(), dest.end());
}

const std::vector<int>& Topology::neighbors(int n) const {
  if (n < 0 || n >= nodes_) throw std::out_of_range("unknown node " + std::to_string(n));
  return neighbors_[static_cast<std::size_t>(n)];
}

const ChannelModel& Topology::channel(int n, int k) const {
  const auto& nb = neighbors(n);
  const auto it = std::lower_bound(nb.begin(), nb.end(), k);
  if (it == nb.end() || *it != k) {
    throw std::out_of_range("no link " + std::to_string(n) + "->" + std::to_string(k));
  }
  const auto pos = static_cast<std::size_t>(it - nb.begin());
  return links_[static_cast<std::size_t>(link_index_[static_cast<std::size_t>(n)][pos])].model;
}

bool Topology::has_link(int n, int k) const {
  if (n < 0 || n >= nodes_) return false;
  const auto& nb = neighbors_[static_cast<std::size_t>(n)];
  return std::binary_search(nb.begin(), nb.end(), k);
}

double Topology::lambda(int n, int c) const {
  double total = 0.0;
  for (const auto& a : arrivals_) {
    if (a.source == n && a.commodity == c) total += a.rate;
  }
  return total;
}

std::vector<std::pair<int, int>> Topology::traffic_pairs() const {
  std::set<std::pair<int, int>> pairs;
  for (const auto& a : arrivals_) pairs.emplace(a.source, a.commodity);
  return {pairs.begin(), pairs.end()};
}

Topology Topology::scaled(double multiplier) const {
  auto arrivals = arrivals_;
  for (auto& a : arrivals) a.rate *= multiplier;
  return Topology(nodes_, h0_, a_max_, links_, std::move(arrivals));
}

Topology Topology::with_h0(double h0) const {
  return Topology(nodes_, h0, a_max_, links_, arrivals_);
}

std::vector<std::string> validate(const Topology& topo) {
  std::vector<std::string> out;
  auto add = [&out](const std::string& s) { out.push_back(s); };
  const int n = topo.node_count();
  if (n < 1) add("node count must be >= 1");
  if (!(topo.h0() > 0.0) || !std::isfinite(topo.h0())) add("h0_bits must be positive");
  if (topo.a_max() < 1) add("a_max must be >= 1");

  std::set<std::pair<int, int>> seen;
  for (const auto& l : topo.links()) {
    const std::string name = std::to_string(l.from) + "->" + std::to_string(l.to);
    if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n) {
      add("link " + name + " references unknown node");
      continue;
    }
    if (l.from == l.to) add("self-link at node " + std::to_string(l.from));
    if (!seen.emplace(l.from, l.to).second) add("duplicate link " + name);
  }

  std::map<int, double> per_source;
  for (const auto& a : topo.arrivals()) {
    const std::string where =
        "arrival " + std::to_string(a.source) + " -> commodity " + std::to_string(a.commodity);
    bool ids_ok = true;
    if (a.source < 0 || a.source >= n) {
      add(where + ": unknown source node");
      ids_ok = false;
    }
    if (a.commodity < 0 || a.commodity >= n) {
      add(where + ": commodity is not a node id");
      ids_ok = false;
    }
    if (!(a.rate >= 0.0) || !std::isfinite(a.rate)) add(where + ": negative rate");
    if (!ids_ok) continue;
    if (a.source == a.commodity && a.rate > 0.0) add(where + ": destination self-traffic");
    if (a.rate > 0.0 && topo.neighbors(a.source).empty()) {
      add(where + ": source has no outgoing link");
    }
    per_source[a.source] += a.rate;
  }
  for (const auto& [src, total] : per_source) {
    // Relative slack so that rates summing to a_max in floating point pass.
    if (total > topo.a_max() * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << "node " << src << ": total arrival rate " << total << " exceeds a_max "
          << topo.a_max();
      add(msg.str());
    }
  }
  return out;
}

}  // namespace divbar
