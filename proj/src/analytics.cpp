#include "divbar/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "divbar/errors.hpp"

namespace divbar {
namespace {

constexpr double kSeriesCutoff = 1e-18;

std::size_t pow3(int k) {
  std::size_t p = 1;
  for (int i = 0; i < k; ++i) p *= 3;
  return p;
}

// Base-3 code of (psi, omega): digit j is 2 if j in psi, 1 if j in omega only.
std::size_t pair_code(NeighborMask psi, NeighborMask omega, int k) {
  std::size_t code = 0;
  std::size_t place = 1;
  for (int j = 0; j < k; ++j) {
    const unsigned in_psi = (psi >> j) & 1U;
    const unsigned in_omega = (omega >> j) & 1U;
    code += place * (in_psi ? 2 : (in_omega ? 1 : 0));
    place *= 3;
  }
  return code;
}

int max_order_of(std::span<const DecodeCurve> curves) {
  int m = 0;
  for (const auto& c : curves) m = std::max(m, c.max_order());
  return m;
}

double single_slot_product(std::span<const DecodeCurve> curves) {
  double p = 1.0;
  for (const auto& c : curves) p *= c[1];
  return p;
}

}  // namespace

double DecodeSetProbs::rep_rmia(NeighborMask psi, NeighborMask omega) const {
  if ((psi & ~omega) != 0) return 0.0;
  return q_pair_.at(pair_code(psi, omega, k_));
}

DecodeSetProbs compute_decode_set_probs(std::span<const DecodeCurve> curves, bool continuous) {
  const int k = static_cast<int>(curves.size());
  if (k == 0) throw std::domain_error("decode-set probabilities need a nonempty neighborhood");
  if (k > kMaxEnumeratedNeighbors) {
    throw UnsupportedSize("subset enumeration is limited to " +
                          std::to_string(kMaxEnumeratedNeighbors) + " neighbors, got " +
                          std::to_string(k));
  }
  DecodeSetProbs p;
  p.k_ = k;
  p.continuous_ = continuous;
  const std::size_t subsets = std::size_t{1} << k;
  p.q_rmia_.assign(subsets, 0.0);
  p.q_rep_.assign(subsets, 0.0);
  p.q_pair_.assign(pow3(k), 0.0);

  const double f_all = single_slot_product(curves);
  if (f_all >= 1.0) throw std::domain_error("no receiver can ever decode: epochs never end");

  // Per-slot REP sets only involve the single-slot law.
  std::vector<double> prod(subsets);
  prod[0] = 1.0;
  for (int j = 0; j < k; ++j) {
    const double f = curves[static_cast<std::size_t>(j)][1];
    const std::size_t half = std::size_t{1} << j;
    for (std::size_t s = 0; s < half; ++s) {
      prod[s | half] = prod[s] * (1.0 - f);
      prod[s] *= f;
    }
  }
  p.q_rep_ = prod;

  std::vector<double> pair(p.q_pair_.size());
  const int max_order = max_order_of(curves);
  double length = 0.0;
  double last_prev = 1.0;
  int m = 1;
  for (; m <= max_order; ++m) {
    double all_prev = 1.0;
    for (const auto& c : curves) all_prev *= c[m - 1];
    last_prev = all_prev;
    if (all_prev < kSeriesCutoff) break;
    length += all_prev;

    std::fill(prod.begin(), prod.end(), 0.0);
    prod[0] = 1.0;
    std::fill(pair.begin(), pair.end(), 0.0);
    pair[0] = 1.0;
    std::size_t width3 = 1;
    for (int j = 0; j < k; ++j) {
      const auto& c = curves[static_cast<std::size_t>(j)];
      const double prev = c[m - 1];
      const double cur = c[m];
      const double f = c[1];
      const std::size_t half = std::size_t{1} << j;
      for (std::size_t s = 0; s < half; ++s) {
        prod[s | half] = prod[s] * (prev - cur);
        prod[s] *= cur;
      }
      // Receiver j: out (cur), decoded by accumulation only, decoded by the
      // final slot alone. The middle factor is P(S_{m-1} < H0, R_m < H0, S_m >= H0).
      const double only_acc = std::max(prev * f - cur, 0.0);
      const double alone = prev * (1.0 - f);
      for (std::size_t s = 0; s < width3; ++s) {
        const double base = pair[s];
        pair[s + width3] = base * only_acc;
        pair[s + 2 * width3] = base * alone;
        pair[s] = base * cur;
      }
      width3 *= 3;
    }
    for (std::size_t s = 1; s < subsets; ++s) p.q_rmia_[s] += prod[s];
    for (std::size_t s = 1; s < pair.size(); ++s) p.q_pair_[s] += pair[s];
  }
  if (m > max_order) {
    last_prev = 1.0;
    for (const auto& c : curves) last_prev *= c[max_order];
  }
  p.epoch_length_ = length;
  p.tail_ = last_prev / (1.0 - f_all);
  return p;
}

EpochLength expected_epoch_length(std::span<const DecodeCurve> curves) {
  if (curves.empty()) throw std::domain_error("epoch length of an empty neighborhood");
  const double f_all = single_slot_product(curves);
  if (f_all >= 1.0) throw std::domain_error("no receiver can ever decode: epochs never end");
  const int max_order = max_order_of(curves);
  EpochLength out;
  int m = 1;
  double last = 1.0;
  for (; m <= max_order; ++m) {
    double term = 1.0;
    for (const auto& c : curves) term *= c[m - 1];
    last = term;
    if (term < kSeriesCutoff) break;
    out.value += term;
  }
  if (m > max_order) {
    last = 1.0;
    for (const auto& c : curves) last *= c[max_order];
  }
  // Submultiplicativity F^(a+b) <= F^(a) F^(b) bounds the remainder geometrically.
  out.tail_bound = last / (1.0 - f_all);
  return out;
}

StationaryPolicy derive_rmia_policy(const StationaryPolicy& rep, const Topology& topo,
                                    const std::vector<DecodeSetProbs>& probs) {
  StationaryPolicy out;
  out.alpha = rep.alpha;
  std::set<std::pair<int, int>> keyed;
  for (const auto& [key, v] : rep.theta) keyed.emplace(std::get<0>(key), std::get<1>(key));
  for (const auto& [n, c] : keyed) {
    const auto k = static_cast<int>(topo.neighbors(n).size());
    const auto& pr = probs.at(static_cast<std::size_t>(n));
    if (pr.size() != k) throw std::invalid_argument("decode-set probabilities do not match node");
    const NeighborMask full = (NeighborMask{1} << k) - 1;
    for (NeighborMask omega = 1; omega <= full; ++omega) {
      const double q = pr.rmia(omega);
      std::vector<double> theta1(static_cast<std::size_t>(k), 0.0);
      if (q <= 0.0) {
        if (pr.continuous()) {
          throw IntegrityFault("numeric degeneracy: q_rmia(" + std::to_string(omega) +
                               ") = 0 at node " + std::to_string(n));
        }
        theta1 = rep.theta_of(n, c, omega, static_cast<std::size_t>(k));
      } else {
        // Sum over nonempty psi subsets of omega.
        for (NeighborMask psi = omega; psi != 0; psi = (psi - 1) & omega) {
          const double w = pr.rep_rmia(psi, omega) / q;
          if (w == 0.0) continue;
          const auto t = rep.theta_of(n, c, psi, static_cast<std::size_t>(k));
          for (int j = 0; j < k; ++j) {
            if ((psi >> j) & 1U) theta1[static_cast<std::size_t>(j)] += w * t[static_cast<std::size_t>(j)];
          }
        }
      }
      if (std::any_of(theta1.begin(), theta1.end(), [](double x) { return x != 0.0; })) {
        out.theta[{n, c, omega}] = std::move(theta1);
      }
    }
  }
  return out;
}

StationaryPolicy random_rep_policy(const Topology& topo, std::uint64_t seed, double alpha_total,
                                   double theta_total) {
  StationaryPolicy p;
  const int nn = topo.node_count();
  p.alpha.assign(static_cast<std::size_t>(nn), std::vector<double>(static_cast<std::size_t>(nn), 0.0));
  RandomStream rng(seed, StreamDomain::kOracle, 77);
  for (int n = 0; n < nn; ++n) {
    const auto k = topo.neighbors(n).size();
    if (k == 0 || k > kMaxEnumeratedNeighbors) continue;
    std::vector<int> cs;
    for (int c : topo.commodities()) {
      if (c != n) cs.push_back(c);
    }
    for (int c : cs) {
      p.alpha[static_cast<std::size_t>(n)][static_cast<std::size_t>(c)] =
          alpha_total / static_cast<double>(cs.size());
      const NeighborMask full = (NeighborMask{1} << k) - 1;
      for (NeighborMask psi = 1; psi <= full; ++psi) {
        std::vector<double> t(k, 0.0);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          if ((psi >> j) & 1U) {
            t[j] = rng.uniform();
            total += t[j];
          }
        }
        for (double& v : t) v *= theta_total / total;
        p.theta[{n, c, psi}] = std::move(t);
      }
    }
  }
  return p;
}

double rmia_gain(const DecodeSetProbs& probs, double alpha, int k_position) {
  if (k_position < 0 || k_position >= probs.size()) throw std::out_of_range("rmia_gain: link");
  const NeighborMask full = (NeighborMask{1} << probs.size()) - 1;
  const NeighborMask bit = NeighborMask{1} << k_position;
  double sum = 0.0;
  for (NeighborMask omega = 1; omega <= full; ++omega) {
    if (omega & bit) sum += probs.rep_rmia(0, omega);
  }
  return alpha * probs.beta() * sum;
}

double zero_rep_decode_series(std::span<const DecodeCurve> curves, int k_position) {
  const int max_order = max_order_of(curves);
  const auto& ck = curves[static_cast<std::size_t>(k_position)];
  double sum = 0.0;
  for (int m = 1; m <= max_order; ++m) {
    double all_prev = 1.0;
    double others = 1.0;
    for (std::size_t j = 0; j < curves.size(); ++j) {
      all_prev *= curves[j][m - 1];
      if (static_cast<int>(j) != k_position) others *= curves[j][m - 1] * curves[j][1];
    }
    if (all_prev < kSeriesCutoff) break;
    sum += std::max(ck[m - 1] * ck[1] - ck[m], 0.0) * others;
  }
  return sum;
}

FlowRateMatrix flow_rates(const StationaryPolicy& policy, const Topology& topo,
                          const std::vector<DecodeSetProbs>& probs, Mode mode) {
  if (mode == Mode::kMia) throw std::invalid_argument("flow_rates: REP or RMIA only");
  FlowRateMatrix b(topo.node_count());
  for (int n = 0; n < topo.node_count(); ++n) {
    const auto& ids = topo.neighbors(n);
    if (ids.empty()) continue;
    const auto& pr = probs.at(static_cast<std::size_t>(n));
    const NeighborMask full = (NeighborMask{1} << ids.size()) - 1;
    for (int c = 0; c < topo.node_count(); ++c) {
      const double a = policy.alpha_of(n, c);
      if (a <= 0.0) continue;
      for (NeighborMask s = 1; s <= full; ++s) {
        const double w = mode == Mode::kRep ? pr.rep(s) : pr.beta() * pr.rmia(s);
        const auto t = policy.theta_of(n, c, s, ids.size());
        for (std::size_t j = 0; j < ids.size(); ++j) b(n, ids[j], c) += a * w * t[j];
      }
    }
  }
  return b;
}

FeasibilityReport check_feasibility(const Topology& topo, const FlowRateMatrix& b,
                                    double tolerance) {
  FeasibilityReport r;
  const int nn = topo.node_count();
  if (b.node_count() != nn) {
    r.feasible = false;
    r.violations.push_back("flow matrix shape does not match topology");
    return r;
  }
  auto fail = [&r](const std::string& s) {
    r.feasible = false;
    r.violations.push_back(s);
  };
  for (int c = 0; c < nn; ++c) {
    for (int n = 0; n < nn; ++n) {
      for (int k = 0; k < nn; ++k) {
        const double v = b(n, k, c);
        if (v == 0.0) continue;
        const std::string at = "b[" + std::to_string(n) + "][" + std::to_string(k) + "][" +
                               std::to_string(c) + "]";
        if (v < 0.0) fail(at + " is negative");
        if (n == k) fail(at + " is a self-flow");
        else if (!topo.has_link(n, k)) fail(at + " uses a missing link");
        if (n == c && v > 0.0) fail(at + " leaves the destination");
      }
    }
  }
  for (int c : topo.commodities()) {
    for (int n = 0; n < nn; ++n) {
      if (n == c) continue;
      double out = 0.0;
      double in = 0.0;
      for (int k = 0; k < nn; ++k) {
        out += b(n, k, c);
        in += b(k, n, c);
      }
      const double slack = out - in - topo.lambda(n, c);
      r.slack.push_back({n, c, slack});
      if (slack < -tolerance) {
        std::ostringstream msg;
        msg << "node " << n << " commodity " << c << ": inflow plus arrivals exceed outflow by "
            << -slack;
        fail(msg.str());
      }
    }
  }
  return r;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kStable: return "stable";
    case Verdict::kUnstable: return "unstable";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "?";
}

Verdict parse_verdict(const std::string& s) {
  if (s == "stable") return Verdict::kStable;
  if (s == "unstable") return Verdict::kUnstable;
  if (s == "inconclusive") return Verdict::kInconclusive;
  throw ConfigError("unknown verdict '" + s + "'");
}

StabilityDetail stability_detail(const MetricsSeries& series) {
  StabilityDetail d;
  const auto& y = series.occupancy;
  const std::size_t t = y.size();
  if (t < static_cast<std::size_t>(kMinStabilitySlots)) return d;

  auto mean = [&y](std::size_t a, std::size_t b) {
    long double s = 0.0L;
    for (std::size_t i = a; i < b; ++i) s += static_cast<long double>(y[i]);
    return static_cast<double>(s / static_cast<long double>(b - a));
  };
  d.third_quarter_mean = mean(t / 2, 3 * t / 4);
  d.last_quarter_mean = mean(3 * t / 4, t);
  for (int c : series.commodities) {
    const double offered = series.offered_rate_commodity(c);
    if (offered <= 0.0) continue;
    d.worst_delivery_ratio =
        std::min(d.worst_delivery_ratio, series.delivered_rate_commodity(c) / offered);
  }

  // Least squares on the second half, x centered for conditioning.
  const std::size_t a = t / 2;
  const auto n = static_cast<double>(t - a);
  const double xbar = (static_cast<double>(a) + static_cast<double>(t - 1)) / 2.0;
  const double ybar = mean(a, t);
  long double sxx = 0.0L, sxy = 0.0L;
  for (std::size_t i = a; i < t; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxx += static_cast<long double>(dx) * dx;
    sxy += static_cast<long double>(dx) * (static_cast<double>(y[i]) - ybar);
  }
  d.slope = static_cast<double>(sxy / sxx);
  const double intercept = ybar;
  long double sse = 0.0L;
  for (std::size_t i = a; i < t; ++i) {
    const double r = static_cast<double>(y[i]) - intercept - d.slope * (static_cast<double>(i) - xbar);
    sse += static_cast<long double>(r) * r;
  }
  const double se = std::sqrt(static_cast<double>(sse) / (n - 2.0) / static_cast<double>(sxx));
  if (se > 0.0) {
    d.slope_t = d.slope / se;
  } else {
    d.slope_t = d.slope > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }

  const bool flat = d.last_quarter_mean <= 1.1 * d.third_quarter_mean;
  if (flat && d.worst_delivery_ratio >= 0.98) {
    d.verdict = Verdict::kStable;
  } else if (d.slope > 0.0 && d.slope_t > 4.0) {
    d.verdict = Verdict::kUnstable;
  }
  return d;
}

Verdict stability_verdict(const MetricsSeries& series) { return stability_detail(series).verdict; }

SweepRow run_sweep_point(const SimConfig& base, double multiplier, int replica) {
  SimConfig cfg = base;
  cfg.topology = base.topology.scaled(multiplier);
  cfg.seed = base.seed + static_cast<std::uint64_t>(replica);
  cfg.record_detail = false;
  cfg.trace = nullptr;
  cfg.observer = nullptr;
  const auto res = run(cfg);
  SweepRow row;
  row.policy = to_string(cfg.policy);
  row.rate_multiplier = multiplier;
  for (const auto& a : cfg.topology.arrivals()) row.lambda_effective += a.rate;
  row.time_avg_occupancy = res.metrics.time_avg_occupancy();
  row.commodities = res.metrics.commodities;
  for (int c : row.commodities) row.delivered_rate.push_back(res.metrics.delivered_rate_commodity(c));
  row.verdict = stability_verdict(res.metrics);
  row.seed = cfg.seed;
  row.slots = cfg.slots;
  return row;
}

BisectionResult max_stable_rate_search(const SimConfig& base, const BisectionOptions& opt) {
  SimConfig cfg = base;
  if (!cfg.curves && cfg.policy != PolicyKind::kStationaryRandomized) {
    cfg.curves = build_link_curves(cfg.topology);
  }
  BisectionResult out;
  double lo = opt.lo;
  double hi = opt.hi;
  for (int it = 0; it < opt.iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto rows = parallel_map<SweepRow>(static_cast<std::size_t>(opt.replicas), opt.jobs,
                                       [&](std::size_t r) {
                                         return run_sweep_point(cfg, mid, static_cast<int>(r));
                                       });
    int stable = 0;
    for (const auto& r : rows) stable += r.verdict == Verdict::kStable ? 1 : 0;
    if (2 * stable > opt.replicas) {
      lo = mid;
    } else {
      hi = mid;
    }
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  }
  out.max_stable_multiplier = lo;
  return out;
}

}  // namespace divbar
