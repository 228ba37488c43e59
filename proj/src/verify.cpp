#include "divbar/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <sstream>

#include "divbar/analytics.hpp"
#include "divbar/engine.hpp"
#include "divbar/errors.hpp"
#include "divbar/monte_carlo.hpp"
#include "divbar/policy.hpp"

namespace divbar {
namespace {

std::string fmt(const char* spec, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, spec, a, b, c);
  return buf;
}

// Binomial sigma with the variance floored at an expected count of 5, below
// which the normal approximation says nothing.
double cell_sigma(double p, long long n) {
  const double floor_p = 5.0 / static_cast<double>(n);
  return binomial_sigma(std::max(p, floor_p), n);
}

// |z| bound keeping the family-wise false-alarm rate of `cells` comparisons at
// that of a single 3-sigma test.
double family_z(std::size_t cells) {
  const double single = std::erfc(3.0 / std::sqrt(2.0));
  const double per_cell = -std::expm1(std::log1p(-single) / static_cast<double>(std::max<std::size_t>(cells, 1)));
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) > per_cell ? lo : hi) = mid;
  }
  return hi;
}

std::vector<ChannelModel> models_of(const Topology& t, int n) {
  std::vector<ChannelModel> out;
  for (int k : t.neighbors(n)) out.push_back(t.channel(n, k));
  return out;
}

bool all_continuous(const Topology& t, int n) {
  for (int k : t.neighbors(n)) {
    if (!t.channel(n, k).is_continuous()) return false;
  }
  return true;
}

std::vector<int> enumerable_nodes(const Topology& t) {
  std::vector<int> out;
  for (int n = 0; n < t.node_count(); ++n) {
    const auto k = t.neighbors(n).size();
    if (k > 0 && k <= static_cast<std::size_t>(kMaxEnumeratedNeighbors)) out.push_back(n);
  }
  return out;
}

std::string node_tag(int n) { return "node " + std::to_string(n); }

void suite_lemma1(const Scenario& sc, SuiteReport& rep) {
  const auto& t = sc.topology;
  std::vector<ChannelModel> distinct;
  for (const auto& l : t.links()) {
    if (!l.model.is_continuous()) continue;
    if (std::find(distinct.begin(), distinct.end(), l.model) == distinct.end()) {
      distinct.push_back(l.model);
    }
  }
  if (distinct.empty()) {
    rep.skipped = true;
    rep.skip_reason = "skipped: discrete channel";
    return;
  }
  constexpr int kOrders = 10;
  for (const auto& model : distinct) {
    const double snr = std::get<RayleighFading>(model.kind()).mean_snr;
    const auto table = build_cdf_table(model, t.h0(), t.h0() / kDefaultGridCells, kOrders);
    const double f = table.at_h0(1);
    double product_margin = 1.0, power_margin = 1.0, decrease_margin = 1.0;
    for (int m = 1; m <= kOrders; ++m) {
      const double cur = table.at_h0(m);
      const double prev = table.at_h0(m - 1);
      decrease_margin = std::min(decrease_margin, (prev - cur) / prev);
      if (m >= 2) {
        product_margin = std::min(product_margin, (prev * f - cur) / (prev * f));
        power_margin = std::min(power_margin, (std::pow(f, m) - cur) / std::pow(f, m));
      }
    }
    const std::string tag = "snr " + fmt("%g", snr);
    rep.checks.push_back({tag + " F(m) < F(m-1) F", product_margin > 1e-9, fmt("min relative margin %.3e", product_margin)});
    rep.checks.push_back({tag + " F(m) < F^m", power_margin > 1e-9, fmt("min relative margin %.3e", power_margin)});
    rep.checks.push_back({tag + " F(m) decreasing", decrease_margin > 1e-9, fmt("min relative margin %.3e", decrease_margin)});
  }
}

void suite_phi(const Scenario& sc, const VerifyOptions& opt, SuiteReport& rep) {
  const auto& t = sc.topology;
  const auto curves = build_link_curves(t);
  RandomStream rng(sc.seed, StreamDomain::kOracle, 11);
  for (int n : enumerable_nodes(t)) {
    const auto& cv = curves->of(n);
    const auto& ids = t.neighbors(n);
    double worst = 0.0;
    for (int s = 0; s < opt.snapshots; ++s) {
      std::vector<long long> w(ids.size());
      for (auto& x : w) x = static_cast<long long>(rng() % 6);
      const auto ranking = rank_receivers(ids, w);
      const auto ph = phi(cv, ranking);
      double sum = 0.0;
      for (double v : ph) sum += v;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    rep.checks.push_back({node_tag(n) + " sum phi = 1", worst <= 1e-6, fmt("max |sum - 1| %.3e", worst)});

    std::vector<int> asc(ids.size());
    for (std::size_t i = 0; i < asc.size(); ++i) asc[i] = static_cast<int>(i);
    const auto ph = phi(cv, asc);
    const auto probs = compute_decode_set_probs(cv, all_continuous(t, n));
    double consistency = 0.0;
    const NeighborMask full = (NeighborMask{1} << ids.size()) - 1;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      double s = 0.0;
      for (NeighborMask om = 1; om <= full; ++om) {
        if ((om >> k) & 1U && (om & ((NeighborMask{1} << k) - 1)) == 0) s += probs.rmia(om);
      }
      consistency = std::max(consistency, std::abs(s - ph[k]));
    }
    rep.checks.push_back({node_tag(n) + " phi = sum of q_rmia over top-ranked sets",
                          consistency <= 1e-6, fmt("max diff %.3e", consistency)});

    const auto models = models_of(t, n);
    const auto mc = simulate_epochs(models, t.h0(), opt.epochs, sc.seed + 100 + n, asc);
    double worst_z = 0.0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const double freq = static_cast<double>(mc.top_ranked[k]) / static_cast<double>(mc.epochs);
      worst_z = std::max(worst_z, std::abs(freq - ph[k]) / cell_sigma(ph[k], mc.epochs));
    }
    const double zlim = family_z(ids.size());
    rep.checks.push_back({node_tag(n) + " phi vs Monte-Carlo", worst_z <= zlim,
                          fmt("max |z| %.2f (limit %.2f) over %.0f epochs", worst_z, zlim,
                              static_cast<double>(mc.epochs))});
  }
}

void suite_qprobs(const Scenario& sc, const VerifyOptions& opt, SuiteReport& rep) {
  const auto& t = sc.topology;
  const auto curves = build_link_curves(t);
  for (int n : enumerable_nodes(t)) {
    const auto& cv = curves->of(n);
    const auto k = t.neighbors(n).size();
    const auto p = compute_decode_set_probs(cv, all_continuous(t, n));
    const NeighborMask full = (NeighborMask{1} << k) - 1;
    double total = 0.0, id1 = 0.0, id2 = 0.0;
    for (NeighborMask om = 1; om <= full; ++om) {
      total += p.rmia(om);
      double s = 0.0;
      for (NeighborMask psi = om;; psi = (psi - 1) & om) {
        s += p.rep_rmia(psi, om);
        if (psi == 0) break;
      }
      id1 = std::max(id1, std::abs(s - p.rmia(om)));
    }
    for (NeighborMask psi = 1; psi <= full; ++psi) {
      double s = 0.0;
      for (NeighborMask om = 1; om <= full; ++om) {
        if ((psi & ~om) == 0) s += p.rep_rmia(psi, om);
      }
      id2 = std::max(id2, std::abs(p.beta() * s - p.rep(psi)));
    }
    rep.checks.push_back({node_tag(n) + " sum q_rmia = 1", std::abs(total - 1.0) <= 1e-6,
                          fmt("|sum - 1| %.3e", std::abs(total - 1.0))});
    rep.checks.push_back({node_tag(n) + " q_rmia = sum_psi q_rep_rmia", id1 <= 1e-6, fmt("max diff %.3e", id1)});
    rep.checks.push_back({node_tag(n) + " q_rep = beta sum_omega q_rep_rmia", id2 <= 1e-6,
                          fmt("max diff %.3e", id2)});

    const auto mc = simulate_epochs(models_of(t, n), t.h0(), opt.epochs, sc.seed + 200 + n);
    const auto ne = mc.epochs;
    double z_rmia = 0.0, z_pair = 0.0, z_rep = 0.0;
    for (NeighborMask om = 1; om <= full; ++om) {
      const double q = p.rmia(om);
      z_rmia = std::max(z_rmia, std::abs(static_cast<double>(mc.omega[om]) / ne - q) / cell_sigma(q, ne));
      for (NeighborMask psi = om;; psi = (psi - 1) & om) {
        const double qp = p.rep_rmia(psi, om);
        const double f = static_cast<double>(mc.pair_count(psi, om)) / ne;
        z_pair = std::max(z_pair, std::abs(f - qp) / cell_sigma(qp, ne));
        if (psi == 0) break;
      }
    }
    for (NeighborMask psi = 0; psi <= full; ++psi) {
      const double q = p.rep(psi);
      const double f = static_cast<double>(mc.rep_sets[psi]) / static_cast<double>(mc.slots);
      z_rep = std::max(z_rep, std::abs(f - q) / cell_sigma(q, mc.slots));
    }
    const double l_rmia = family_z(full);
    const double l_pair = family_z(static_cast<std::size_t>(std::pow(3.0, static_cast<double>(k))) - 1);
    const double l_rep = family_z(full + 1);
    rep.checks.push_back({node_tag(n) + " q_rmia vs Monte-Carlo", z_rmia <= l_rmia,
                          fmt("max |z| %.2f (limit %.2f)", z_rmia, l_rmia)});
    rep.checks.push_back({node_tag(n) + " q_rep_rmia vs Monte-Carlo", z_pair <= l_pair,
                          fmt("max |z| %.2f (limit %.2f)", z_pair, l_pair)});
    rep.checks.push_back({node_tag(n) + " q_rep vs Monte-Carlo", z_rep <= l_rep,
                          fmt("max |z| %.2f (limit %.2f)", z_rep, l_rep)});
  }
}

void suite_epochlen(const Scenario& sc, const VerifyOptions& opt, SuiteReport& rep) {
  const auto& t = sc.topology;
  const auto curves = build_link_curves(t);
  for (int n : enumerable_nodes(t)) {
    const auto el = expected_epoch_length(curves->of(n));
    const auto mc = simulate_epochs(models_of(t, n), t.h0(), opt.epochs, sc.seed + 300 + n);
    const double rel = std::abs(mc.length_mean() - el.value) / el.value;
    rep.checks.push_back({node_tag(n) + " E{T} vs Monte-Carlo", rel <= 0.01,
                          fmt("analytic %.6f, simulated %.6f, relative diff %.2e", el.value,
                              mc.length_mean(), rel)});
    rep.checks.push_back({node_tag(n) + " E{T} tail bound", el.tail_bound < 1e-9,
                          fmt("tail bound %.3e", el.tail_bound)});
  }
}

void suite_theta1(const Scenario& sc, const VerifyOptions& opt, SuiteReport& rep) {
  const auto& t = sc.topology;
  const auto curves = build_link_curves(t);
  std::vector<DecodeSetProbs> probs(static_cast<std::size_t>(t.node_count()));
  for (int n : enumerable_nodes(t)) {
    probs[static_cast<std::size_t>(n)] = compute_decode_set_probs(curves->of(n), all_continuous(t, n));
  }
  const auto rep_policy = random_rep_policy(t, sc.seed);
  const auto rmia_policy = derive_rmia_policy(rep_policy, t, probs);
  double worst_sum = 0.0;
  for (const auto& [key, v] : rmia_policy.theta) {
    double s = 0.0;
    for (double x : v) s += x;
    worst_sum = std::max(worst_sum, s);
  }
  rep.checks.push_back({"sum theta1 <= 1 on every set", worst_sum <= 1.0 + 1e-12,
                        fmt("max sum %.12f", worst_sum)});
  const auto errs = validate(rmia_policy, t);
  rep.checks.push_back({"theta1 is a valid stationary policy", errs.empty(),
                        errs.empty() ? "" : errs.front()});

  for (int n : enumerable_nodes(t)) {
    const auto& ids = t.neighbors(n);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.channel(n, ids[k]).is_continuous()) continue;
      const double g = rmia_gain(probs[static_cast<std::size_t>(n)], 1.0, static_cast<int>(k));
      rep.checks.push_back({"gain on " + std::to_string(n) + "->" + std::to_string(ids[k]) + " > 0",
                            g > 0.0, fmt("delta %.6e at alpha 1", g)});
    }
  }

  const auto b_rep = flow_rates(rep_policy, t, probs, Mode::kRep);
  const auto b_rmia = flow_rates(rmia_policy, t, probs, Mode::kRmia);
  double worst = 0.0;
  for (int n = 0; n < t.node_count(); ++n) {
    for (int k = 0; k < t.node_count(); ++k) {
      for (int c = 0; c < t.node_count(); ++c) worst = std::max(worst, std::abs(b_rep(n, k, c) - b_rmia(n, k, c)));
    }
  }
  rep.checks.push_back({"analytic RMIA flows equal REP flows", worst <= 1e-9, fmt("max diff %.3e", worst)});

  double worst_z = 0.0;
  std::size_t cells = 0;
  const auto& cs = t.commodities();
  for (int n : enumerable_nodes(t)) {
    const auto models = models_of(t, n);
    const auto& ids = t.neighbors(n);
    const auto a = simulate_stationary_flows(n, ids, models, t.h0(), rep_policy, cs, Mode::kRep,
                                             opt.flow_slots, 100, sc.seed);
    const auto b = simulate_stationary_flows(n, ids, models, t.h0(), rmia_policy, cs, Mode::kRmia,
                                             opt.flow_slots, 100, sc.seed);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      for (std::size_t ci = 0; ci < cs.size(); ++ci) {
        const double d = a.mean(static_cast<int>(k), ci) - b.mean(static_cast<int>(k), ci);
        const double s = coupled_difference_sigma(a, b, static_cast<int>(k), ci);
        ++cells;
        if (s > 0.0) worst_z = std::max(worst_z, std::abs(d) / s);
        else if (d != 0.0) worst_z = std::max(worst_z, 1e9);
      }
    }
  }
  const double zlim = family_z(cells);
  rep.checks.push_back({"simulated RMIA flows match REP flows", worst_z <= zlim,
                        fmt("max |z| %.2f (limit %.2f) over %.0f coupled slots", worst_z, zlim,
                            static_cast<double>(opt.flow_slots))});
}

void suite_coupling(const Scenario& sc, const VerifyOptions& opt, SuiteReport& rep) {
  const auto& t = sc.topology;
  const double h0 = t.h0();
  long long violations = 0;
  long long trials = 0;
  for (const auto& l : t.links()) {
    const RandomStream rs(sc.seed, StreamDomain::kOracle, static_cast<std::uint64_t>(l.from) * 1000 + l.to);
    std::uint64_t counter = 0;
    for (int trial = 0; trial < opt.trials; ++trial) {
      // Information left over from an earlier interrupted epoch of the packet.
      const int prior = static_cast<int>(rs.bits_at(counter++) % 3);
      double pre = 0.0;
      for (int i = 0; i < prior; ++i) pre += l.model.quantile(rs.uniform_at(counter++));
      pre = std::min(pre, 0.999 * h0);
      long long t_rep = -1, t_rmia = -1, t_mia = -1;
      double acc = 0.0;
      for (long long s = 1; s <= 100000 && t_rep < 0; ++s) {
        const double r = l.model.quantile(rs.uniform_at(counter++));
        acc += r;
        if (t_mia < 0 && pre + acc >= h0) t_mia = s;
        if (t_rmia < 0 && acc >= h0) t_rmia = s;
        if (r >= h0) t_rep = s;
      }
      if (t_rep < 0) continue;  // channel too weak to ever decode in one slot
      ++trials;
      if (!(t_mia <= t_rmia && t_rmia <= t_rep)) ++violations;
    }
  }
  rep.checks.push_back({"first decodable slot MIA <= RMIA <= REP", violations == 0,
                        fmt("%.0f violations in %.0f coupled trials", static_cast<double>(violations),
                            static_cast<double>(trials))});

  // Line relay 0 -> 1 -> 2 with a single packet and no arrivals.
  const Topology line(3, 2.0, 1,
                      {{0, 1, ChannelModel::rayleigh(1.0)}, {1, 2, ChannelModel::rayleigh(1.0)}},
                      {{0, 2, 0.0}});
  int worse = 0;
  int undelivered = 0;
  for (int r = 0; r < 10; ++r) {
    long long slot[2] = {0, 0};
    const PolicyKind kinds[2] = {PolicyKind::kDivbarRmia, PolicyKind::kDivbarRep};
    for (int i = 0; i < 2; ++i) {
      SimConfig cfg;
      cfg.topology = line;
      cfg.policy = kinds[i];
      cfg.slots = 200000;
      cfg.seed = sc.seed + static_cast<std::uint64_t>(r);
      cfg.record_detail = false;
      cfg.initial_packets = {{0, 2}};
      const auto res = run(cfg);
      if (res.deliveries.empty()) ++undelivered;
      else slot[i] = res.deliveries.front().slot;
    }
    if (slot[0] > slot[1]) ++worse;
  }
  rep.checks.push_back({"line relay RMIA delivery <= REP delivery", worse == 0 && undelivered == 0,
                        fmt("%.0f of 10 seeds worse, %.0f undelivered runs", worse, undelivered)});
}

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names = {"lemma1", "phi", "qprobs", "epochlen", "theta1", "coupling"};
  return names;
}

SuiteReport run_verify_suite(const Scenario& scenario, const std::string& suite,
                             const VerifyOptions& options) {
  const auto& names = verify_suite_names();
  if (std::find(names.begin(), names.end(), suite) == names.end()) {
    throw ConfigError("unknown verify suite '" + suite + "'");
  }
  SuiteReport rep;
  rep.suite = suite;
  if (suite == "lemma1") suite_lemma1(scenario, rep);
  else if (suite == "phi") suite_phi(scenario, options, rep);
  else if (suite == "qprobs") suite_qprobs(scenario, options, rep);
  else if (suite == "epochlen") suite_epochlen(scenario, options, rep);
  else if (suite == "theta1") suite_theta1(scenario, options, rep);
  else suite_coupling(scenario, options, rep);
  return rep;
}

void print_report(std::ostream& out, const SuiteReport& report) {
  out << "suite " << report.suite << '\n';
  if (report.skipped) {
    out << "  " << report.skip_reason << '\n';
    return;
  }
  for (const auto& c : report.checks) {
    out << "  " << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << " (" << c.detail << ')';
    out << '\n';
  }
  out << (report.passed() ? "suite passed\n" : "suite FAILED\n");
}

}  // namespace divbar
