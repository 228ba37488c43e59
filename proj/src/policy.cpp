#include "divbar/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "divbar/errors.hpp"

namespace divbar {
namespace {

// Further series terms are bounded by the all-neighbor product of F^(m-1),
// so stopping below this leaves far less than the normalization tolerance.
constexpr double kSeriesCutoff = 1e-18;
constexpr double kTieTolerance = 1e-12;

}  // namespace

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kDivbarRep: return "rep";
    case PolicyKind::kDivbarRmia: return "rmia";
    case PolicyKind::kDivbarMia: return "mia";
    case PolicyKind::kStationaryRandomized: return "stationary";
  }
  return "?";
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "rep" || name == "divbar") return PolicyKind::kDivbarRep;
  if (name == "rmia") return PolicyKind::kDivbarRmia;
  if (name == "mia") return PolicyKind::kDivbarMia;
  if (name == "stationary") return PolicyKind::kStationaryRandomized;
  throw ConfigError("unknown policy '" + name + "' (expected rep, rmia, mia)");
}

Mode mode_of(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kDivbarRep: return Mode::kRep;
    case PolicyKind::kDivbarMia: return Mode::kMia;
    default: return Mode::kRmia;
  }
}

double StationaryPolicy::alpha_of(int n, int c) const {
  if (n < 0 || static_cast<std::size_t>(n) >= alpha.size()) return 0.0;
  const auto& row = alpha[static_cast<std::size_t>(n)];
  if (c < 0 || static_cast<std::size_t>(c) >= row.size()) return 0.0;
  return row[static_cast<std::size_t>(c)];
}

std::vector<double> StationaryPolicy::theta_of(int n, int c, NeighborMask mask,
                                               std::size_t neighbors) const {
  const auto it = theta.find({n, c, mask});
  if (it == theta.end()) return std::vector<double>(neighbors, 0.0);
  auto v = it->second;
  v.resize(neighbors, 0.0);
  return v;
}

std::vector<std::string> validate(const StationaryPolicy& policy, const Topology& topo) {
  std::vector<std::string> out;
  for (std::size_t n = 0; n < policy.alpha.size(); ++n) {
    double total = 0.0;
    for (double a : policy.alpha[n]) {
      if (!(a >= 0.0)) out.push_back("negative alpha at node " + std::to_string(n));
      total += a;
    }
    if (total > 1.0 + 1e-12) out.push_back("alpha sums above 1 at node " + std::to_string(n));
  }
  for (const auto& [key, probs] : policy.theta) {
    const auto [n, c, mask] = key;
    const std::string where = "theta(" + std::to_string(n) + "," + std::to_string(c) + "," +
                              std::to_string(mask) + ")";
    if (n < 0 || n >= topo.node_count()) {
      out.push_back(where + ": unknown node");
      continue;
    }
    const auto k = topo.neighbors(n).size();
    if (mask == 0 || (k < 32 && (mask >> k) != 0)) out.push_back(where + ": bad successor set");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!(probs[i] >= 0.0)) out.push_back(where + ": negative probability");
      if (probs[i] > 0.0 && (i >= 32 || !((mask >> i) & 1U))) {
        out.push_back(where + ": mass outside the successor set");
      }
      total += probs[i];
    }
    if (total > 1.0 + 1e-12) out.push_back(where + ": probabilities sum above 1");
  }
  return out;
}

std::shared_ptr<const LinkCurves> build_link_curves(const Topology& topo, int grid_cells,
                                                    int max_order) {
  auto out = std::make_shared<LinkCurves>();
  out->h0 = topo.h0();
  std::vector<std::pair<ChannelModel, DecodeCurve>> built;
  const double step = topo.h0() / grid_cells;
  for (int n = 0; n < topo.node_count(); ++n) {
    std::vector<DecodeCurve> row;
    std::vector<bool> cont;
    for (int k : topo.neighbors(n)) {
      const auto& model = topo.channel(n, k);
      auto it = std::find_if(built.begin(), built.end(),
                             [&](const auto& e) { return e.first == model; });
      if (it == built.end()) {
        built.emplace_back(model, DecodeCurve(build_cdf_table(model, topo.h0(), step, max_order)));
        it = std::prev(built.end());
      }
      row.push_back(it->second);
      cont.push_back(model.is_continuous());
    }
    out->by_node.push_back(std::move(row));
    out->continuous.push_back(std::move(cont));
  }
  return out;
}

long long differential_backlog(const BacklogSnapshot& snap, int n, int k, int c) {
  return std::max(snap.q(n, c) - snap.q(k, c), 0LL);
}

std::vector<int> rank_receivers(std::span<const int> ids, std::span<const long long> weights) {
  std::vector<int> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ua = static_cast<std::size_t>(a);
    const auto ub = static_cast<std::size_t>(b);
    if (weights[ua] != weights[ub]) return weights[ua] > weights[ub];
    return ids[ua] < ids[ub];
  });
  return order;
}

PrioritySets priority_sets(std::span<const int> ids, std::span<const long long> weights) {
  PrioritySets s;
  s.ranking = rank_receivers(ids, weights);
  s.high.resize(ids.size());
  s.low.resize(ids.size());
  for (std::size_t r = 0; r < s.ranking.size(); ++r) {
    const auto pos = static_cast<std::size_t>(s.ranking[r]);
    for (std::size_t q = 0; q < s.ranking.size(); ++q) {
      const int id = ids[static_cast<std::size_t>(s.ranking[q])];
      if (q < r) s.high[pos].push_back(id);
      if (q > r) s.low[pos].push_back(id);
    }
  }
  return s;
}

std::vector<double> phi(std::span<const DecodeCurve> curves, std::span<const int> ranking) {
  if (curves.empty()) throw std::domain_error("phi: empty neighborhood, the epoch never ends");
  const std::size_t k = ranking.size();
  std::vector<double> out(curves.size(), 0.0);
  std::vector<double> cur(k), prev(k), suffix(k + 1);
  int max_order = 0;
  for (const auto& c : curves) max_order = std::max(max_order, c.max_order());
  for (int m = 1; m <= max_order; ++m) {
    double all_prev = 1.0;
    for (std::size_t r = 0; r < k; ++r) {
      const auto& c = curves[static_cast<std::size_t>(ranking[r])];
      cur[r] = c[m];
      prev[r] = c[m - 1];
      all_prev *= prev[r];
    }
    if (all_prev < kSeriesCutoff) break;
    suffix[k] = 1.0;
    for (std::size_t r = k; r-- > 0;) suffix[r] = suffix[r + 1] * prev[r];
    double high = 1.0;
    for (std::size_t r = 0; r < k; ++r) {
      out[static_cast<std::size_t>(ranking[r])] += high * suffix[r + 1] * (prev[r] - cur[r]);
      high *= cur[r];
    }
  }
  return out;
}

std::vector<double> phi_rep(std::span<const DecodeCurve> curves, std::span<const int> ranking) {
  if (curves.empty()) throw std::domain_error("phi: empty neighborhood, the epoch never ends");
  std::vector<double> out(curves.size(), 0.0);
  double high = 1.0;
  for (int pos : ranking) {
    const double f = curves[static_cast<std::size_t>(pos)][1];
    out[static_cast<std::size_t>(pos)] = high * (1.0 - f);
    high *= f;
  }
  return out;
}

std::optional<int> choose_divbar_forwarder(const EpochDecision& decision, std::span<const int> ids,
                                           NeighborMask acks) {
  if (acks == 0) throw IntegrityFault("forwarder requested with an empty ack set");
  std::optional<int> best;
  long long best_w = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!((acks >> i) & 1U)) continue;
    const long long w = i < decision.weights.size() ? decision.weights[i] : 0;
    if (w > best_w) {
      best_w = w;
      best = ids[i];
    }
  }
  return best;
}

Policy::Policy(PolicyKind kind, const Topology& topo, std::shared_ptr<const LinkCurves> curves,
               std::uint64_t seed, std::optional<StationaryPolicy> stationary,
               Mode stationary_mode)
    : kind_(kind),
      mode_(kind == PolicyKind::kStationaryRandomized ? stationary_mode : mode_of(kind)),
      topo_(&topo),
      curves_(std::move(curves)),
      stationary_(std::move(stationary)),
      phi_cache_(static_cast<std::size_t>(topo.node_count())) {
  if (kind_ == PolicyKind::kStationaryRandomized && !stationary_) {
    throw ConfigError("stationary randomized policy needs alpha/theta");
  }
  if (kind_ != PolicyKind::kStationaryRandomized && !curves_) {
    throw ConfigError("DIVBAR policies need decode curves");
  }
  for (int n = 0; n < topo.node_count(); ++n) {
    streams_.emplace_back(seed, StreamDomain::kPolicy, static_cast<std::uint64_t>(n));
  }
}

const std::vector<double>& Policy::phi_for(int n, std::span<const int> ranking) {
  auto& cache = phi_cache_[static_cast<std::size_t>(n)];
  std::uint64_t key = 0;
  const bool cacheable = ranking.size() <= 16;
  if (cacheable) {
    for (int pos : ranking) key = (key << 4) | static_cast<std::uint64_t>(pos);
    const auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const auto& cv = curves_->of(n);
  auto v = kind_ == PolicyKind::kDivbarRep ? phi_rep(cv, ranking) : phi(cv, ranking);
  if (!cacheable) {
    cache[~0ULL] = std::move(v);
    return cache[~0ULL];
  }
  return cache.emplace(key, std::move(v)).first->second;
}

EpochDecision Policy::choose_commodity(const BacklogSnapshot& snap, int n,
                                       std::uint64_t epoch_index) {
  EpochDecision best;
  const auto& ids = topo_->neighbors(n);
  if (kind_ == PolicyKind::kStationaryRandomized) {
    const double u = streams_[static_cast<std::size_t>(n)].uniform_at(2 * epoch_index);
    double cum = 0.0;
    for (int c = 0; c < topo_->node_count(); ++c) {
      const double a = stationary_->alpha_of(n, c);
      if (a <= 0.0) continue;
      cum += a;
      if (u < cum) {
        best.commodity = c;
        best.metric = a;
        break;
      }
    }
    return best;
  }

  std::vector<long long> w(ids.size());
  for (int c : topo_->commodities()) {
    if (c == n || snap.q(n, c) == 0) continue;
    bool any = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      w[i] = differential_backlog(snap, n, ids[i], c);
      any = any || w[i] > 0;
    }
    if (!any) continue;
    const auto ranking = rank_receivers(ids, w);
    const auto& ph = phi_for(n, ranking);
    double metric = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) metric += static_cast<double>(w[i]) * ph[i];
    if (metric > 0.0 && metric > best.metric * (1.0 + kTieTolerance)) {
      best.commodity = c;
      best.metric = metric;
      best.weights = w;
      best.ranking.clear();
      for (int pos : ranking) best.ranking.push_back(ids[static_cast<std::size_t>(pos)]);
    }
  }
  return best;
}

std::optional<int> Policy::choose_forwarder(int n, const EpochDecision& decision,
                                            NeighborMask acks, std::uint64_t epoch_index) const {
  const auto& ids = topo_->neighbors(n);
  if (acks == 0) throw IntegrityFault("forwarder requested with an empty ack set");
  if (kind_ != PolicyKind::kStationaryRandomized) {
    return choose_divbar_forwarder(decision, ids, acks);
  }
  if (decision.commodity == kIdle) return std::nullopt;
  const auto theta = stationary_->theta_of(n, decision.commodity, acks, ids.size());
  const double u = streams_[static_cast<std::size_t>(n)].uniform_at(2 * epoch_index + 1);
  double cum = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!((acks >> i) & 1U)) continue;
    cum += theta[i];
    if (u < cum) return ids[i];
  }
  return std::nullopt;
}

}  // namespace divbar
