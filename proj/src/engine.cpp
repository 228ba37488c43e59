#include "divbar/engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>

#include "divbar/errors.hpp"

namespace divbar {
namespace {

struct LiveEpoch {
  bool live = false;
  EpochDecision decision;
  std::optional<PacketId> packet;
  long long start = 0;
  std::uint64_t index = 0;
};

std::string packet_str(std::optional<PacketId> p) {
  return p ? std::to_string(*p) : std::string("null");
}

std::string commodity_str(int c) { return c == kIdle ? std::string("idle") : std::to_string(c); }

std::string mask_str(NeighborMask mask, const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if ((mask >> i) & 1U) {
      if (!s.empty()) s += '|';
      s += std::to_string(ids[i]);
    }
  }
  return s.empty() ? std::string("-") : s;
}

int poisson_capped(double lambda, int cap, double u) {
  int k = 0;
  double p = std::exp(-lambda);
  double cum = p;
  while (u > cum && k < cap) {
    ++k;
    p *= lambda / k;
    cum += p;
  }
  return k;
}

}  // namespace

double MetricsSeries::time_avg_occupancy() const {
  if (occupancy.empty()) return 0.0;
  long double s = 0.0L;
  for (long long v : occupancy) s += static_cast<long double>(v);
  return static_cast<double>(s / static_cast<long double>(occupancy.size()));
}

double MetricsSeries::delivered_rate(std::size_t pair) const {
  return slots > 0 ? static_cast<double>(delivered_final.at(pair)) / static_cast<double>(slots)
                   : 0.0;
}

double MetricsSeries::delivered_rate_commodity(int c) const {
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].second == c) total += delivered_rate(i);
  }
  return total;
}

double MetricsSeries::offered_rate_commodity(int c) const {
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].second == c) total += offered[i];
  }
  return total;
}

SimConfig make_sim_config(const Scenario& scenario, PolicyKind policy) {
  SimConfig cfg;
  cfg.topology = scenario.topology;
  cfg.policy = policy;
  cfg.slots = scenario.slots;
  cfg.seed = scenario.seed;
  cfg.arrival_process = scenario.arrival_process;
  cfg.mia_loser_ledger = scenario.mia_loser_ledger;
  return cfg;
}

std::vector<ArrivalCount> draw_arrivals(const Topology& topo, ArrivalProcess process,
                                        std::uint64_t seed, long long slot) {
  std::vector<ArrivalCount> out;
  const int cap = topo.a_max();
  for (const auto& [n, c] : topo.traffic_pairs()) {
    const double lambda = topo.lambda(n, c);
    if (lambda <= 0.0) continue;
    const RandomStream rng(seed, StreamDomain::kArrival, static_cast<std::uint64_t>(n),
                           static_cast<std::uint64_t>(c));
    const auto t = static_cast<std::uint64_t>(slot);
    int count = 0;
    if (process == ArrivalProcess::kBernoulliBatch) {
      const double p = lambda / cap;
      for (int j = 0; j < cap; ++j) {
        if (rng.uniform_at(t, static_cast<std::uint64_t>(j)) < p) ++count;
      }
    } else {
      count = poisson_capped(lambda, cap, rng.uniform_at(t));
    }
    if (count > 0) out.push_back({n, c, count});
  }
  return out;
}

SimResult run(const SimConfig& cfg) {
  const Topology& topo = cfg.topology;
  if (auto errs = validate(topo); !errs.empty()) {
    throw ConfigError("invalid topology: " + errs.front());
  }
  if (cfg.slots < 1) throw ConfigError("slots must be >= 1");
  if (cfg.stationary) {
    if (auto errs = validate(*cfg.stationary, topo); !errs.empty()) {
      throw ConfigError("invalid stationary policy: " + errs.front());
    }
  }
  for (int n = 0; n < topo.node_count(); ++n) {
    if (topo.neighbors(n).size() > 32) throw UnsupportedSize("more than 32 neighbors");
  }

  std::shared_ptr<const LinkCurves> curves = cfg.curves;
  if (!curves && cfg.policy != PolicyKind::kStationaryRandomized) {
    curves = build_link_curves(topo);
  }
  if (curves && std::abs(curves->h0 - topo.h0()) > 1e-12 * topo.h0()) {
    throw ConfigError("decode curves were built for a different h0");
  }
  Policy policy(cfg.policy, topo, curves, cfg.seed, cfg.stationary, cfg.stationary_mode);
  const Mode mode = policy.mode();
  const double h0 = topo.h0();
  const int node_count = topo.node_count();

  std::vector<std::vector<RandomStream>> link_rng(static_cast<std::size_t>(node_count));
  std::vector<std::vector<const ChannelModel*>> link_model(static_cast<std::size_t>(node_count));
  for (int n = 0; n < node_count; ++n) {
    for (int k : topo.neighbors(n)) {
      link_rng[static_cast<std::size_t>(n)].emplace_back(
          cfg.seed, StreamDomain::kChannel, static_cast<std::uint64_t>(n),
          static_cast<std::uint64_t>(k));
      link_model[static_cast<std::size_t>(n)].push_back(&topo.channel(n, k));
    }
  }

  SimResult result;
  result.final_state = Network(node_count);
  Network& net = result.final_state;
  MetricsSeries& ms = result.metrics;
  ms.slots = cfg.slots;
  for (int n = 0; n < node_count; ++n) ms.nodes.push_back(n);
  ms.commodities = topo.commodities();
  ms.pairs = topo.traffic_pairs();
  for (const auto& [n, c] : ms.pairs) ms.offered.push_back(topo.lambda(n, c));
  ms.delivered_final.assign(ms.pairs.size(), 0);
  ms.detailed = cfg.record_detail;
  ms.occupancy.reserve(static_cast<std::size_t>(cfg.slots));
  if (ms.detailed) {
    ms.queue.reserve(static_cast<std::size_t>(cfg.slots));
    ms.delivered.reserve(static_cast<std::size_t>(cfg.slots));
  }

  std::ostream* trace = cfg.trace;
  if (trace) *trace << "# divbar-sim v1\n" << kTraceHeader << '\n';

  for (const auto& ip : cfg.initial_packets) {
    if (ip.node < 0 || ip.node >= node_count || ip.commodity < 0 || ip.commodity >= node_count ||
        ip.node == ip.commodity) {
      throw ConfigError("invalid initial packet placement");
    }
    const PacketId id = net.inject(ip.node, ip.commodity, 0);
    if (trace) *trace << "0," << ip.node << ",arrival," << ip.commodity << ',' << id << ",\n";
  }

  std::vector<LiveEpoch> epochs(static_cast<std::size_t>(node_count));
  std::vector<std::uint64_t> epoch_counter(static_cast<std::size_t>(node_count), 0);
  std::vector<Transfer> transfers;

  auto pair_index = [&ms](int source, int c) -> std::size_t {
    const auto it = std::lower_bound(ms.pairs.begin(), ms.pairs.end(), std::make_pair(source, c));
    return static_cast<std::size_t>(it - ms.pairs.begin());
  };

  for (long long tau = 1; tau <= cfg.slots; ++tau) {
    BacklogSnapshot before;
    if (cfg.observer) before = net.snapshot();

    // Epoch starts all read the same slot-start backlogs.
    std::optional<BacklogSnapshot> snap;
    for (int n = 0; n < node_count; ++n) {
      auto& ep = epochs[static_cast<std::size_t>(n)];
      if (ep.live || topo.neighbors(n).empty()) continue;
      if (!snap) snap = net.snapshot();
      ep.live = true;
      ep.start = tau;
      ep.index = epoch_counter[static_cast<std::size_t>(n)]++;
      ep.decision = policy.choose_commodity(*snap, n, ep.index);
      ep.packet.reset();
      if (ep.decision.commodity != kIdle) {
        const auto& q = net.node(n).cpq(ep.decision.commodity);
        if (!q.empty()) ep.packet = q.front().id;
      }
      if (trace) {
        *trace << tau << ',' << n << ",epoch_start," << commodity_str(ep.decision.commodity) << ','
               << packet_str(ep.packet) << ",metric=" << ep.decision.metric << '\n';
      }
    }

    transfers.clear();
    for (int n = 0; n < node_count; ++n) {
      auto& ep = epochs[static_cast<std::size_t>(n)];
      if (!ep.live) continue;
      const auto& ids = topo.neighbors(n);
      const auto& rngs = link_rng[static_cast<std::size_t>(n)];
      const auto& models = link_model[static_cast<std::size_t>(n)];
      NeighborMask ack_rmia = 0;
      NeighborMask ack_mia = 0;
      const auto counter = static_cast<std::uint64_t>(tau);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const double rate = models[i]->quantile(rngs[i].uniform_at(counter));
        const AckPair ack = accumulate(net.node(ids[i]), n, ep.packet, rate, mode, h0);
        if (ack.rmia) ack_rmia |= NeighborMask{1} << i;
        if (ack.mia) ack_mia |= NeighborMask{1} << i;
      }
      if (ack_rmia == 0) continue;

      if (mode == Mode::kMia && (ack_mia & ack_rmia) != ack_rmia) {
        throw IntegrityFault("slot " + std::to_string(tau) + ", node " + std::to_string(n) +
                             ": MIA ack set misses an RMIA decoder");
      }
      const NeighborMask contest = mode == Mode::kMia ? ack_mia : ack_rmia;
      std::optional<int> forwarder;
      if (ep.packet) forwarder = policy.choose_forwarder(n, ep.decision, contest, ep.index);

      if (mode == Mode::kMia && ep.packet) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!((ack_mia >> i) & 1U) || (forwarder && *forwarder == ids[i])) continue;
          auto& s = net.node(ids[i]);
          if (cfg.mia_loser_ledger == LoserLedger::kClear) {
            s.erase_ppq(*ep.packet);
          } else {
            double& v = s.ppq_ref(*ep.packet);
            v = std::min(v, h0);
          }
        }
      }
      renewal_clear(net, n, ids, ep.packet, mode);

      if (trace) {
        *trace << tau << ',' << n << ",epoch_end," << commodity_str(ep.decision.commodity) << ','
               << packet_str(ep.packet) << ",rmia=" << mask_str(ack_rmia, ids)
               << ";mia=" << mask_str(ack_mia, ids) << ";start=" << ep.start << '\n';
        if (ep.packet) {
          *trace << tau << ',' << n << (forwarder ? ",forward," : ",retain,")
                 << ep.decision.commodity << ',' << *ep.packet << ','
                 << (forwarder ? "to=" + std::to_string(*forwarder) : std::string()) << '\n';
        }
      }
      if (ep.packet && forwarder) {
        transfers.push_back({n, *forwarder, ep.decision.commodity, ep.packet});
      }
      ep.live = false;
      ++result.epochs_ended;
    }

    const auto arrivals = draw_arrivals(topo, cfg.arrival_process, cfg.seed, tau);
    auto update = net.apply_slot_update(transfers, arrivals, tau);

    for (const auto& p : update.delivered) {
      ++ms.delivered_final[pair_index(p.source, p.commodity)];
      result.deliveries.push_back({p.id, p.source, p.commodity, p.created_slot, tau});
      if (trace) {
        *trace << tau << ',' << p.commodity << ",deliver," << p.commodity << ',' << p.id
               << ",source=" << p.source << ";created=" << p.created_slot << '\n';
      }
    }
    if (trace) {
      for (const auto& p : update.created) {
        *trace << tau << ',' << p.source << ",arrival," << p.commodity << ',' << p.id << ",\n";
      }
    }
    if (cfg.check_invariants) net.check_integrity();

    if (ms.detailed) {
      std::vector<long long> row;
      row.reserve(ms.nodes.size() * ms.commodities.size());
      for (int n : ms.nodes) {
        for (int c : ms.commodities) row.push_back(net.node(n).backlog(c));
      }
      ms.queue.push_back(std::move(row));
      ms.delivered.push_back(ms.delivered_final);
    }
    // Every live packet sits in exactly one CPQ.
    const long long occ = net.created_count() - net.delivered_count();
    ms.occupancy.push_back(occ);

    if (cfg.observer) {
      SlotReport rep;
      rep.slot = tau;
      rep.before = std::move(before);
      rep.after = net.snapshot();
      rep.transfers = transfers;
      rep.arrivals = arrivals;
      rep.delivered = update.delivered;
      cfg.observer(rep);
    }
  }
  return result;
}

}  // namespace divbar
