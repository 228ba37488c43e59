// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "divbar/analytics.hpp"
#include "divbar/channel.hpp"
#include "divbar/csv.hpp"
#include "divbar/engine.hpp"
#include "divbar/monte_carlo.hpp"
#include "divbar/policy.hpp"
#include "divbar/rng.hpp"
#include "divbar/topology.hpp"

namespace {

using namespace divbar;

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* spec, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, spec, a, b, c);
  return buf;
}

Scenario scenario(const char* name) { return load_scenario(std::string(DIVBAR_SCENARIO_DIR "/") + name); }

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

std::vector<int> transmitters(const Topology& t) {
  std::vector<int> out;
  for (int n = 0; n < t.node_count(); ++n) {
    if (!t.neighbors(n).empty()) out.push_back(n);
  }
  return out;
}

std::vector<DecodeSetProbs> all_probs(const Topology& t, const LinkCurves& curves) {
  std::vector<DecodeSetProbs> out(static_cast<std::size_t>(t.node_count()));
  for (int n : transmitters(t)) {
    out[static_cast<std::size_t>(n)] = compute_decode_set_probs(curves.of(n), all_continuous(t, n));
  }
  return out;
}

// |freq - p| in binomial sigmas; a zero-probability cell must stay empty.
double z_score(double freq, double p, long long n) {
  const double s = binomial_sigma(p, n);
  if (s == 0.0) return freq == p ? 0.0 : 1e9;
  return std::abs(freq - p) / s;
}

Outcome convolution_inequalities() {
  Outcome o;
  double worst = 1.0;
  for (double snr : {0.5, 1.0, 4.0}) {
    for (double h0 : {1.0, 2.0}) {
      const auto t = build_cdf_table(ChannelModel::rayleigh(snr), h0, h0 / kDefaultGridCells, 10);
      const double f = t.at_h0(1);
      for (int m = 1; m <= 10; ++m) {
        const double cur = t.at_h0(m);
        const double prev = t.at_h0(m - 1);
        const std::string at = fmt("snr %g H0 %g m %.0f", snr, h0, m);
        const double dec = (prev - cur) / prev;
        o.require(dec > 1e-9, at + " decreasing");
        worst = std::min(worst, dec);
        if (m >= 2) {
          const double prod = (prev * f - cur) / (prev * f);
          const double pow = (std::pow(f, m) - cur) / std::pow(f, m);
          o.require(prod > 1e-9, at + " product bound");
          o.require(pow > 1e-9, at + " power bound");
          worst = std::min({worst, prod, pow});
        }
      }
    }
  }
  if (o.passed) o.detail = fmt("min relative margin %.3e", worst);
  return o;
}

Outcome convolution_mc() {
  Outcome o;
  const long long n = 1000000;
  double worst = 0.0;
  std::uint64_t seed = 1000;
  for (double snr : {0.5, 1.0, 4.0}) {
    const auto model = ChannelModel::rayleigh(snr);
    for (double h0 : {1.0, 2.0}) {
      const auto t = build_cdf_table(model, h0);
      for (int m : {2, 3, 5}) {
        const double p = t.at_h0(m);
        const double z = z_score(empirical_sum_below(model, h0, m, n, ++seed), p, n);
        worst = std::max(worst, z);
        o.require(z <= 4.0, fmt("snr %g H0 %g m %.0f", snr, h0, m) + fmt(" |z| %.2f", z));
      }
    }
  }
  if (o.passed) o.detail = fmt("max |z| %.2f over 18 cells of %.0f samples", worst, static_cast<double>(n));
  return o;
}

Outcome phi_normalization() {
  Outcome o;
  const auto sc = scenario("default_10node.json");
  for (double h0 : {1.0, 2.0}) {
    const auto t = sc.topology.with_h0(h0);
    const auto curves = build_link_curves(t);
    RandomStream rng(sc.seed, StreamDomain::kOracle, 31);
    const auto nodes = transmitters(t);
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      const int n = nodes[static_cast<std::size_t>(s) % nodes.size()];
      const auto& ids = t.neighbors(n);
      std::vector<long long> w(ids.size());
      for (auto& x : w) x = static_cast<long long>(rng() % 20);
      const auto ph = phi(curves->of(n), rank_receivers(ids, w));
      double sum = 0.0;
      for (double v : ph) sum += v;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    o.require(worst <= 1e-6, fmt("H0 %g max |sum - 1| %.3e", h0, worst));
  }
  const auto bern = scenario("bernoulli.json").topology;
  const auto curves = build_link_curves(bern);
  const std::vector<int> ranking = {0, 1};
  const auto ph = phi(curves->of(0), ranking);
  o.require(ph.size() == 2 && std::abs(ph[0] - 2.0 / 3.0) <= 1e-9 && std::abs(ph[1] - 1.0 / 3.0) <= 1e-9,
            fmt("Bernoulli phi (%.12f, %.12f)", ph.at(0), ph.at(1)));
  if (o.passed) o.detail = fmt("Bernoulli phi (%.12f, %.12f)", ph[0], ph[1]);
  return o;
}

// |z| bound at which `cells` independent comparisons have the family-wise
// false-alarm rate of one 3-sigma test. Reported for context only.
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

Outcome decode_set_identities() {
  Outcome o;
  const long long epochs = 1000000;
  double worst_id = 0.0;
  struct Cell {
    std::string name;
    double z = 0.0;
    double expected = 0.0;
  };
  std::vector<Cell> cells;
  for (const char* name : {"default_10node.json", "two_rayleigh.json"}) {
    const auto sc = scenario(name);
    const auto& t = sc.topology;
    const auto curves = build_link_curves(t);
    for (int n : transmitters(t)) {
      const auto p = compute_decode_set_probs(curves->of(n), all_continuous(t, n));
      const auto k = t.neighbors(n).size();
      const NeighborMask full = (NeighborMask{1} << k) - 1;
      const std::string at = std::string(name) + " node " + std::to_string(n);
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
      o.require(std::abs(total - 1.0) <= 1e-6, at + " sum q_rmia");
      o.require(id1 <= 1e-6, at + " q_rmia marginal");
      o.require(id2 <= 1e-6, at + " q_rep marginal");
      worst_id = std::max({worst_id, std::abs(total - 1.0), id1, id2});

      const auto mc = simulate_epochs(models_of(t, n), t.h0(), epochs, sc.seed + 500 + n);
      const auto ne = mc.epochs;
      const auto add = [&](const std::string& what, long long count, double q, long long trials) {
        const double f = static_cast<double>(count) / static_cast<double>(trials);
        cells.push_back({at + " " + what, z_score(f, q, trials), q * static_cast<double>(trials)});
      };
      for (NeighborMask om = 1; om <= full; ++om) {
        add(fmt("q_rmia(%.0f)", om), mc.omega[om], p.rmia(om), ne);
        for (NeighborMask psi = om;; psi = (psi - 1) & om) {
          add(fmt("q_rep_rmia(%.0f, %.0f)", psi, om), mc.pair_count(psi, om), p.rep_rmia(psi, om), ne);
          if (psi == 0) break;
        }
      }
      for (NeighborMask psi = 0; psi <= full; ++psi) add(fmt("q_rep(%.0f)", psi), mc.rep_sets[psi], p.rep(psi), mc.slots);
    }
  }
  std::size_t beyond = 0;
  const Cell* worst = &cells.front();
  for (const auto& c : cells) {
    if (c.z > 3.0) ++beyond;
    if (c.z > worst->z) worst = &c;
  }
  o.require(beyond == 0, fmt("%.0f of %.0f cells beyond 3 sigma", static_cast<double>(beyond),
                             static_cast<double>(cells.size())));
  const std::string d = fmt("max identity error %.3e, worst |z| %.2f", worst_id, worst->z) + " at " +
                        worst->name + fmt(" (expected count %.3g; family-wise 3-sigma-level bound %.2f)",
                                          worst->expected, family_z(cells.size()));
  o.detail = o.passed ? d : o.detail + "; " + d;
  return o;
}

Outcome epoch_length() {
  Outcome o;
  double worst = 0.0;
  const long long epochs = 100000;
  for (double h0 : {1.0, 2.0}) {
    const auto sc = scenario("default_10node.json");
    const auto t = sc.topology.with_h0(h0);
    const auto curves = build_link_curves(t);
    for (int n : transmitters(t)) {
      const auto el = expected_epoch_length(curves->of(n));
      const auto mc = simulate_epochs(models_of(t, n), h0, epochs, sc.seed + 700 + n);
      const double rel = std::abs(mc.length_mean() - el.value) / el.value;
      worst = std::max(worst, rel);
      o.require(rel <= 0.01, fmt("H0 %g node %.0f relative diff %.3e", h0, n, rel));
    }
  }
  double worst_b = 0.0;
  for (double p : {0.1, 0.3, 0.5, 0.9, 1.0}) {
    const DecodeCurve c(build_cdf_table(ChannelModel::bernoulli(1.0, p), 1.0, 1.0 / 64, kDefaultMaxOrder));
    const DecodeCurve curves[] = {c};
    const double e = expected_epoch_length(curves).value;
    worst_b = std::max(worst_b, std::abs(e - 1.0 / p));
    o.require(std::abs(e - 1.0 / p) <= 1e-9, fmt("Bernoulli(%g) E{T} %.12f", p, e));
  }
  if (o.passed) o.detail = fmt("max relative diff %.3e; Bernoulli max error %.3e", worst, worst_b);
  return o;
}

Outcome rmia_dominance_witness() {
  Outcome o;
  const auto sc = scenario("default_10node.json");
  const auto& t = sc.topology;
  const auto curves = build_link_curves(t);
  const auto probs = all_probs(t, *curves);
  double min_gain = 1e300;
  for (int n : transmitters(t)) {
    const auto& ids = t.neighbors(n);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.channel(n, ids[k]).is_continuous()) continue;
      const double g = rmia_gain(probs[static_cast<std::size_t>(n)], 1.0, static_cast<int>(k));
      min_gain = std::min(min_gain, g);
      o.require(g > 0.0, "gain on " + std::to_string(n) + "->" + std::to_string(ids[k]));
    }
  }
  const auto rep_policy = random_rep_policy(t, sc.seed);
  const auto rmia_policy = derive_rmia_policy(rep_policy, t, probs);
  double worst_sum = 0.0;
  for (const auto& [key, v] : rmia_policy.theta) {
    double s = 0.0;
    for (double x : v) s += x;
    worst_sum = std::max(worst_sum, s);
  }
  o.require(worst_sum <= 1.0, fmt("max sum theta1 %.15f", worst_sum));
  o.require(validate(rmia_policy, t).empty(), "derived policy invalid");

  const long long slots = 1000000;
  const auto& cs = t.commodities();
  double worst_z = 0.0;
  for (int n : transmitters(t)) {
    const auto models = models_of(t, n);
    const auto& ids = t.neighbors(n);
    const auto a = simulate_stationary_flows(n, ids, models, t.h0(), rep_policy, cs, Mode::kRep, slots, 100, sc.seed);
    const auto b = simulate_stationary_flows(n, ids, models, t.h0(), rmia_policy, cs, Mode::kRmia, slots, 100,
                                             sc.seed);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      for (std::size_t ci = 0; ci < cs.size(); ++ci) {
        const double d = a.mean(static_cast<int>(k), ci) - b.mean(static_cast<int>(k), ci);
        const double s = coupled_difference_sigma(a, b, static_cast<int>(k), ci);
        const double z = s > 0.0 ? std::abs(d) / s : (d == 0.0 ? 0.0 : 1e9);
        worst_z = std::max(worst_z, z);
        o.require(z <= 3.0, fmt("flow %.0f->%.0f", n, ids[k]) + fmt(" commodity %.0f |z| %.2f", cs[ci], z));
      }
    }
  }
  if (o.passed) {
    o.detail = fmt("min gain %.3e, max sum theta1 %.12f, max |z| %.2f", min_gain, worst_sum, worst_z);
  }
  return o;
}

std::map<PolicyKind, double> capacity(double h0) {
  auto sc = scenario("default_10node.json");
  sc.topology = sc.topology.with_h0(h0);
  sc.slots = 200000;
  const auto curves = build_link_curves(sc.topology);
  std::map<PolicyKind, double> out;
  for (auto k : {PolicyKind::kDivbarRep, PolicyKind::kDivbarRmia, PolicyKind::kDivbarMia}) {
    SimConfig cfg = make_sim_config(sc, k);
    cfg.curves = curves;
    BisectionOptions opt;
    opt.replicas = 3;
    opt.iterations = 8;
    out[k] = max_stable_rate_search(cfg, opt).max_stable_multiplier;
  }
  return out;
}

double rep_capacity_h1 = -1.0;

Outcome qualitative() {
  Outcome o;
  const auto a = capacity(1.0);
  const auto b = capacity(2.0);
  const double rep1 = a.at(PolicyKind::kDivbarRep), rmia1 = a.at(PolicyKind::kDivbarRmia),
               mia1 = a.at(PolicyKind::kDivbarMia);
  const double rep2 = b.at(PolicyKind::kDivbarRep), rmia2 = b.at(PolicyKind::kDivbarRmia),
               mia2 = b.at(PolicyKind::kDivbarMia);
  rep_capacity_h1 = rep1;
  const double hi1 = std::max({rep1, rmia1, mia1});
  const double lo1 = std::min({rep1, rmia1, mia1});
  o.require(hi1 > 0.0 && (hi1 - lo1) <= 0.1 * hi1, fmt("H0 1 spread %.4f of %.4f", hi1 - lo1, hi1));
  const double step = 1.0 / 256.0;
  o.require(mia2 >= rmia2, fmt("H0 2 MIA %.6f < RMIA %.6f", mia2, rmia2));
  o.require(rmia2 - rep2 >= step, fmt("H0 2 RMIA - REP %.6f below one step", rmia2 - rep2));
  std::ostringstream d;
  d << "H0 1 rep/rmia/mia " << format_number(rep1) << '/' << format_number(rmia1) << '/'
    << format_number(mia1) << ", H0 2 " << format_number(rep2) << '/' << format_number(rmia2) << '/'
    << format_number(mia2);
  o.detail = o.passed ? d.str() : d.str() + "; " + o.detail;
  return o;
}

Outcome stability_sanity() {
  Outcome o;
  if (rep_capacity_h1 <= 0.0) {
    rep_capacity_h1 = capacity(1.0).at(PolicyKind::kDivbarRep);
  }
  auto sc = scenario("default_10node.json");
  sc.topology = sc.topology.with_h0(1.0);
  sc.slots = 200000;
  auto cfg = make_sim_config(sc, PolicyKind::kDivbarRep);
  cfg.record_detail = false;
  cfg.curves = build_link_curves(sc.topology);
  const auto base = cfg.topology;

  cfg.topology = base.scaled(0.5 * rep_capacity_h1);
  const auto low = stability_detail(run(cfg).metrics);
  o.require(low.verdict == Verdict::kStable, "half capacity verdict " + to_string(low.verdict));

  cfg.topology = base.scaled(1.5 * rep_capacity_h1);
  const auto high = stability_detail(run(cfg).metrics);
  o.require(high.verdict == Verdict::kUnstable, "1.5x capacity verdict " + to_string(high.verdict));
  o.require(high.slope > 0.0, fmt("1.5x slope %.3e", high.slope));

  const std::string d = "capacity " + format_number(rep_capacity_h1) +
                        fmt(", 0.5x occupancy %.2f->%.2f, 1.5x slope %.4f", low.third_quarter_mean,
                            low.last_quarter_mean, high.slope);
  o.detail = o.passed ? d : d + "; " + o.detail;
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto sc = scenario("default_10node.json");
  for (auto k : {PolicyKind::kDivbarRep, PolicyKind::kDivbarRmia, PolicyKind::kDivbarMia}) {
    std::string out[2];
    for (auto& s : out) {
      auto cfg = make_sim_config(sc, k);
      cfg.topology = cfg.topology.scaled(0.3);
      cfg.slots = 50000;
      std::ostringstream csv;
      write_metrics_csv(csv, run(cfg).metrics);
      s = csv.str();
    }
    o.require(!out[0].empty() && out[0] == out[1], to_string(k) + " metrics differ");
  }
  if (o.passed) o.detail = "three policies, 50000 slots each";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> body;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "convolution inequalities strict", 5, convolution_inequalities},
      {2, "convolution table vs Monte-Carlo", 30, convolution_mc},
      {3, "phi normalization and Bernoulli closed form", 5, phi_normalization},
      {4, "decode-set identities", 60, decode_set_identities},
      {5, "epoch-length oracle", 20, epoch_length},
      {6, "RMIA dominance witness", 120, rmia_dominance_witness},
      {7, "policy capacity ordering", 600, qualitative},
      {8, "stability sanity", 120, stability_sanity},
      {9, "determinism", 60, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_s) o.require(false, fmt("took %.1f s, limit %.0f s", secs, c.limit_s));
    if (!o.passed) ++failed;
    std::printf("criterion %d %s: %s (%s) [%.1f s]\n", c.id, o.passed ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of 9 criteria passed\n", 9 - failed);
  return failed == 0 ? 0 : 1;
}
