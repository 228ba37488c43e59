#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "divbar/analytics.hpp"
#include "divbar/errors.hpp"
#include "divbar/monte_carlo.hpp"

namespace divbar {
namespace {

DecodeCurve bernoulli_curve(double p, int order = 400) {
  std::vector<double> v(static_cast<std::size_t>(order) + 1);
  for (int m = 0; m <= order; ++m) v[static_cast<std::size_t>(m)] = std::pow(1.0 - p, m);
  return DecodeCurve(std::move(v), order);
}

DecodeCurve rayleigh_curve(double snr, double h0) {
  return DecodeCurve(build_cdf_table(ChannelModel::rayleigh(snr), h0));
}

std::vector<DecodeSetProbs> probs_for(const Topology& t) {
  const auto lc = build_link_curves(t);
  std::vector<DecodeSetProbs> out(static_cast<std::size_t>(t.node_count()));
  for (int n = 0; n < t.node_count(); ++n) {
    if (t.neighbors(n).empty()) continue;
    bool cont = true;
    for (int k : t.neighbors(n)) cont = cont && t.channel(n, k).is_continuous();
    out[static_cast<std::size_t>(n)] = compute_decode_set_probs(lc->of(n), cont);
  }
  return out;
}

void expect_identities(const DecodeSetProbs& p) {
  const NeighborMask full = (NeighborMask{1} << p.size()) - 1;
  double total = 0.0;
  for (NeighborMask o = 1; o <= full; ++o) {
    total += p.rmia(o);
    double pair_sum = 0.0;
    for (NeighborMask psi = 0; psi <= full; ++psi) {
      EXPECT_GE(p.rep_rmia(psi, o), 0.0);
      if ((psi & o) != psi) EXPECT_EQ(p.rep_rmia(psi, o), 0.0);
      pair_sum += p.rep_rmia(psi, o);
    }
    EXPECT_NEAR(pair_sum, p.rmia(o), 1e-6);
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
  for (NeighborMask psi = 1; psi <= full; ++psi) {
    double s = 0.0;
    for (NeighborMask o = 1; o <= full; ++o) s += p.rep_rmia(psi, o);
    EXPECT_NEAR(p.rep(psi), p.beta() * s, 1e-6);
  }
}

TEST(DecodeSetProbs, TwoBernoulliNeighbors) {
  const std::vector<DecodeCurve> c{bernoulli_curve(0.5), bernoulli_curve(0.5)};
  const auto p = compute_decode_set_probs(c, false);
  EXPECT_NEAR(p.rmia(0b01), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(p.rmia(0b10), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(p.rmia(0b11), 1.0 / 3.0, 1e-12);
  for (NeighborMask o = 1; o < 4; ++o) EXPECT_NEAR(p.rep_rmia(0, o), 0.0, 1e-15);
  EXPECT_NEAR(p.expected_epoch_length(), 4.0 / 3.0, 1e-12);
  expect_identities(p);
}

TEST(DecodeSetProbs, TwoRayleighNeighborsMatchFineGridReference) {
  const std::vector<DecodeCurve> c{rayleigh_curve(1.0, 1.0), rayleigh_curve(1.0, 1.0)};
  const auto p = compute_decode_set_probs(c);
  EXPECT_NEAR(p.rmia(0b01), 0.332098675342, 1e-6);
  EXPECT_NEAR(p.rmia(0b10), 0.332098675342, 1e-6);
  EXPECT_NEAR(p.rmia(0b11), 0.335802649317, 1e-6);
  EXPECT_NEAR(p.expected_epoch_length(), 1.45041936652, 1e-6);
  const double f = c[0][1];
  EXPECT_NEAR(p.rep(0), f * f, 1e-12);
  EXPECT_NEAR(p.rep(0b01), (1 - f) * f, 1e-12);
  EXPECT_NEAR(p.rep(0b11), (1 - f) * (1 - f), 1e-12);
  expect_identities(p);
}

TEST(DecodeSetProbs, IdentitiesOnMixedNeighborhoods) {
  for (double h0 : {1.0, 2.0}) {
    const std::vector<DecodeCurve> c{rayleigh_curve(0.5, h0), rayleigh_curve(1.0, h0),
                                     rayleigh_curve(4.0, h0), rayleigh_curve(10.0, h0)};
    expect_identities(compute_decode_set_probs(c));
  }
  const std::vector<DecodeCurve> d{bernoulli_curve(0.2), bernoulli_curve(0.7), bernoulli_curve(0.5)};
  expect_identities(compute_decode_set_probs(d, false));
}

TEST(DecodeSetProbs, MatchesMonteCarloWithinThreeSigma) {
  const auto m = ChannelModel::rayleigh(1.0);
  const std::vector<DecodeCurve> c{rayleigh_curve(1.0, 1.0), rayleigh_curve(1.0, 1.0)};
  const auto p = compute_decode_set_probs(c);
  const ChannelModel models[] = {m, m};
  const long long n = 1000000;
  const auto s = simulate_epochs(models, 1.0, n, 31);
  for (NeighborMask o = 1; o < 4; ++o) {
    const double q = p.rmia(o);
    EXPECT_LE(std::abs(static_cast<double>(s.omega[o]) / n - q), 3.0 * binomial_sigma(q, n)) << o;
  }
}

TEST(DecodeSetProbs, PhiIsTheTopRankedShareOfQ) {
  const std::vector<DecodeCurve> c{rayleigh_curve(0.5, 2.0), rayleigh_curve(1.0, 2.0), rayleigh_curve(4.0, 2.0)};
  const auto p = compute_decode_set_probs(c);
  const std::vector<std::vector<int>> rankings{{0, 1, 2}, {2, 0, 1}, {1, 2, 0}};
  for (const auto& rank : rankings) {
    const auto ph = phi(c, rank);
    for (int pos = 0; pos < 3; ++pos) {
      double s = 0.0;
      for (NeighborMask o = 1; o < 8; ++o) {
        int top = -1;
        for (int r : rank) {
          if ((o >> r) & 1U) {
            top = r;
            break;
          }
        }
        if (top == pos) s += p.rmia(o);
      }
      EXPECT_NEAR(ph[static_cast<std::size_t>(pos)], s, 1e-6);
    }
  }
}

TEST(DecodeSetProbs, SizeGuards) {
  std::vector<DecodeCurve> many(kMaxEnumeratedNeighbors + 1, bernoulli_curve(0.5));
  EXPECT_THROW(compute_decode_set_probs(many, false), UnsupportedSize);
  EXPECT_THROW(compute_decode_set_probs(std::span<const DecodeCurve>{}), std::domain_error);
}

TEST(EpochLength, BernoulliIsGeometric) {
  const std::vector<DecodeCurve> c{bernoulli_curve(0.25, 512)};
  EXPECT_NEAR(expected_epoch_length(c).value, 4.0, 1e-9);
  for (double p : {0.1, 0.5, 0.9}) {
    const std::vector<DecodeCurve> d{bernoulli_curve(p, 512)};
    EXPECT_NEAR(expected_epoch_length(d).value, 1.0 / p, 1e-9);
  }
}

TEST(EpochLength, RayleighMatchesReferenceAndSimulation) {
  const std::vector<DecodeCurve> c{rayleigh_curve(1.0, 1.0)};
  const auto e = expected_epoch_length(c);
  EXPECT_NEAR(e.value, 1.91312405766, 1e-6);
  EXPECT_LT(e.tail_bound, 1e-9);
  const std::vector<DecodeCurve> c2{rayleigh_curve(1.0, 2.0)};
  EXPECT_NEAR(expected_epoch_length(c2).value, 3.07096965317, 1e-6);
  const ChannelModel m[] = {ChannelModel::rayleigh(1.0)};
  const auto s = simulate_epochs(m, 1.0, 100000, 9);
  EXPECT_NEAR(s.length_mean(), e.value, 0.01 * e.value);
}

TEST(EpochLength, EmptyNeighborhoodIsDomainError) {
  EXPECT_THROW(expected_epoch_length(std::span<const DecodeCurve>{}), std::domain_error);
}

TEST(RmiaGain, ZeroForSingleSlotChannelsAndIdleNodes) {
  const std::vector<DecodeCurve> c{bernoulli_curve(0.5), bernoulli_curve(0.3)};
  const auto p = compute_decode_set_probs(c, false);
  EXPECT_NEAR(rmia_gain(p, 1.0, 0), 0.0, 1e-15);
  EXPECT_NEAR(rmia_gain(p, 1.0, 1), 0.0, 1e-15);
  const std::vector<DecodeCurve> r{rayleigh_curve(1.0, 2.0)};
  EXPECT_EQ(rmia_gain(compute_decode_set_probs(r), 0.0, 0), 0.0);
}

TEST(RmiaGain, SingleRayleighNeighborAgreesWithSeriesAndSimulation) {
  const std::vector<DecodeCurve> c{rayleigh_curve(1.0, 2.0)};
  const auto p = compute_decode_set_probs(c);
  const double gain = rmia_gain(p, 1.0, 0);
  EXPECT_GT(gain, 0.0);
  // Fine-grid reference of the zero-REP series, divided by the epoch length.
  EXPECT_NEAR(zero_rep_decode_series(c, 0), 0.847105423922, 1e-6);
  EXPECT_NEAR(gain, 0.847105423922 / 3.07096965317, 1e-6);
  const ChannelModel m[] = {ChannelModel::rayleigh(1.0)};
  const long long n = 1000000;
  const auto s = simulate_epochs(m, 2.0, n, 13);
  const double freq = static_cast<double>(s.zero_rep[0]) / n;
  const double expect = zero_rep_decode_series(c, 0);
  EXPECT_LE(std::abs(freq - expect), 3.0 * binomial_sigma(expect, n));
}

TEST(RmiaGain, TwoNeighborSeriesReference) {
  const std::vector<DecodeCurve> c{rayleigh_curve(1.0, 1.0), rayleigh_curve(1.0, 1.0)};
  EXPECT_NEAR(zero_rep_decode_series(c, 0), 0.0849076083448, 1e-6);
  const auto p = compute_decode_set_probs(c);
  EXPECT_NEAR(rmia_gain(p, 1.0, 0), p.beta() * zero_rep_decode_series(c, 0), 1e-9);
}

TEST(RmiaGain, PositiveOnEveryDefaultScenarioLink) {
  const auto sc = load_scenario(DIVBAR_SCENARIO_DIR "/default_10node.json");
  for (double h0 : {1.0, 2.0}) {
    const auto t = sc.topology.with_h0(h0);
    const auto probs = probs_for(t);
    for (int n = 0; n < t.node_count(); ++n) {
      for (std::size_t k = 0; k < t.neighbors(n).size(); ++k) {
        EXPECT_GT(rmia_gain(probs[static_cast<std::size_t>(n)], 0.5, static_cast<int>(k)), 0.0);
      }
    }
  }
}

TEST(DeriveRmiaPolicy, IdentityOnSingleSlotChannels) {
  const auto t = load_scenario(DIVBAR_SCENARIO_DIR "/bernoulli.json").topology;
  const auto rep = random_rep_policy(t, 4);
  const auto probs = probs_for(t);
  const auto rmia = derive_rmia_policy(rep, t, probs);
  EXPECT_EQ(rmia.alpha, rep.alpha);
  for (const auto& [key, v] : rep.theta) {
    const auto [n, c, mask] = key;
    const auto got = rmia.theta_of(n, c, mask, v.size());
    for (std::size_t j = 0; j < v.size(); ++j) EXPECT_NEAR(got[j], v[j], 1e-12);
  }
}

TEST(DeriveRmiaPolicy, ZeroThetaStaysZero) {
  const auto t = load_scenario(DIVBAR_SCENARIO_DIR "/two_rayleigh.json").topology;
  auto rep = random_rep_policy(t, 4);
  for (auto& [key, v] : rep.theta) std::fill(v.begin(), v.end(), 0.0);
  const auto rmia = derive_rmia_policy(rep, t, probs_for(t));
  for (const auto& [key, v] : rmia.theta) {
    for (double x : v) EXPECT_EQ(x, 0.0);
  }
}

TEST(DeriveRmiaPolicy, ValidAndFlowPreserving) {
  for (const char* name : {"two_rayleigh.json", "default_10node.json"}) {
    auto t = load_scenario(std::string(DIVBAR_SCENARIO_DIR) + "/" + name).topology.with_h0(2.0);
    const auto probs = probs_for(t);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto rep = random_rep_policy(t, seed);
      const auto rmia = derive_rmia_policy(rep, t, probs);
      EXPECT_TRUE(validate(rmia, t).empty());
      for (const auto& [key, v] : rmia.theta) {
        EXPECT_LE(std::accumulate(v.begin(), v.end(), 0.0), 1.0 + 1e-12);
      }
      const auto a = flow_rates(rep, t, probs, Mode::kRep);
      const auto b = flow_rates(rmia, t, probs, Mode::kRmia);
      for (int n = 0; n < t.node_count(); ++n) {
        for (int k = 0; k < t.node_count(); ++k) {
          for (int c = 0; c < t.node_count(); ++c) EXPECT_NEAR(a(n, k, c), b(n, k, c), 1e-9);
        }
      }
    }
  }
}

TEST(DeriveRmiaPolicy, ZeroMassSetOnContinuousChannelIsAFault) {
  const auto t = load_scenario(DIVBAR_SCENARIO_DIR "/two_rayleigh.json").topology;
  auto probs = probs_for(t);
  // Two receivers that never decode together make q({1, 2}) vanish.
  std::vector<DecodeCurve> fake{DecodeCurve({1.0, 0.0}, 1), DecodeCurve({1.0, 1.0, 0.0}, 2)};
  probs[0] = compute_decode_set_probs(fake, true);
  ASSERT_EQ(probs[0].rmia(0b11), 0.0);
  EXPECT_THROW(derive_rmia_policy(random_rep_policy(t, 1), t, probs), IntegrityFault);
}

TEST(Feasibility, Examples) {
  const Topology none(2, 1.0, 1, {{0, 1, ChannelModel::rayleigh(1.0)}}, {});
  const auto r0 = check_feasibility(none, FlowRateMatrix(2));
  EXPECT_TRUE(r0.feasible);
  for (const auto& s : r0.slack) EXPECT_EQ(s.slack, 0.0);

  const Topology one(2, 1.0, 1, {{0, 1, ChannelModel::rayleigh(1.0)}}, {{0, 1, 0.2}});
  FlowRateMatrix b(2);
  b(0, 1, 1) = 0.2;
  const auto r1 = check_feasibility(one, b);
  EXPECT_TRUE(r1.feasible);
  for (const auto& s : r1.slack) {
    if (s.node == 0 && s.commodity == 1) EXPECT_NEAR(s.slack, 0.0, 1e-15);
  }

  const Topology over(2, 1.0, 1, {{0, 1, ChannelModel::rayleigh(1.0)}}, {{0, 1, 0.3}});
  const auto r2 = check_feasibility(over, b);
  EXPECT_FALSE(r2.feasible);
  bool found = false;
  for (const auto& s : r2.slack) {
    if (s.node == 0 && s.commodity == 1) {
      EXPECT_NEAR(s.slack, -0.1, 1e-12);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Feasibility, StructuralViolations) {
  const Topology t(3, 1.0, 1, {{0, 1, ChannelModel::rayleigh(1.0)}, {1, 2, ChannelModel::rayleigh(1.0)}}, {});
  FlowRateMatrix b(3);
  b(0, 2, 2) = 0.1;   // no such link
  b(2, 1, 2) = 0.1;   // out of the destination
  b(0, 1, 1) = -0.1;  // negative
  const auto r = check_feasibility(t, b);
  EXPECT_FALSE(r.feasible);
  EXPECT_GE(r.violations.size(), 3u);
}

MetricsSeries run_single_link(double p, double lambda, PolicyKind kind, long long slots) {
  SimConfig cfg;
  cfg.topology = Topology(2, 1.0, 1, {{0, 1, ChannelModel::bernoulli(1.0, p)}}, {{0, 1, lambda}});
  cfg.policy = kind;
  cfg.slots = slots;
  cfg.record_detail = false;
  return run(cfg).metrics;
}

TEST(Stability, ZeroLoadIsStable) {
  const auto m = run_single_link(0.5, 0.0, PolicyKind::kDivbarRmia, 20000);
  EXPECT_EQ(stability_verdict(m), Verdict::kStable);
  EXPECT_EQ(m.time_avg_occupancy(), 0.0);
}

TEST(Stability, UnderloadedPerfectLinkIsStable) {
  EXPECT_EQ(stability_verdict(run_single_link(1.0, 0.5, PolicyKind::kDivbarRmia, 20000)), Verdict::kStable);
}

TEST(Stability, OverloadedLinkGrowsLinearly) {
  const auto m = run_single_link(0.3, 0.5, PolicyKind::kDivbarRep, 100000);
  const auto d = stability_detail(m);
  EXPECT_EQ(d.verdict, Verdict::kUnstable);
  EXPECT_NEAR(d.slope, 0.2, 0.02);
  EXPECT_GT(d.slope_t, 4.0);
}

TEST(Stability, ShortSeriesIsInconclusive) {
  EXPECT_EQ(stability_verdict(run_single_link(0.3, 0.5, PolicyKind::kDivbarRep, 9999)), Verdict::kInconclusive);
  EXPECT_EQ(stability_verdict(run_single_link(1.0, 0.0, PolicyKind::kDivbarRep, 100)), Verdict::kInconclusive);
}

TEST(Stability, VerdictNamesRoundTrip) {
  for (auto v : {Verdict::kStable, Verdict::kUnstable, Verdict::kInconclusive}) {
    EXPECT_EQ(parse_verdict(to_string(v)), v);
  }
  EXPECT_THROW(parse_verdict("maybe"), ConfigError);
}

TEST(Bisection, FindsSingleLinkCapacity) {
  SimConfig cfg;
  cfg.topology = Topology(2, 1.0, 1, {{0, 1, ChannelModel::bernoulli(1.0, 0.5)}}, {{0, 1, 1.0}});
  cfg.policy = PolicyKind::kDivbarRmia;
  cfg.slots = 40000;
  const auto res = max_stable_rate_search(cfg, {});
  EXPECT_EQ(res.rows.size(), 24u);
  EXPECT_LE(res.max_stable_multiplier, 0.5);
  EXPECT_GE(res.max_stable_multiplier, 0.44);
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    EXPECT_EQ(res.rows[i].seed, cfg.seed + i % 3);
  }
}

TEST(Bisection, ParallelJobsGiveTheSameRows) {
  SimConfig cfg;
  cfg.topology = Topology(2, 1.0, 1, {{0, 1, ChannelModel::rayleigh(2.0)}}, {{0, 1, 1.0}});
  cfg.policy = PolicyKind::kDivbarMia;
  cfg.slots = 10000;
  BisectionOptions a{0.0, 1.0, 4, 3, 1}, b{0.0, 1.0, 4, 3, 3};
  const auto ra = max_stable_rate_search(cfg, a);
  const auto rb = max_stable_rate_search(cfg, b);
  EXPECT_EQ(ra.max_stable_multiplier, rb.max_stable_multiplier);
  ASSERT_EQ(ra.rows.size(), rb.rows.size());
  for (std::size_t i = 0; i < ra.rows.size(); ++i) {
    EXPECT_EQ(ra.rows[i].time_avg_occupancy, rb.rows[i].time_avg_occupancy);
  }
}

TEST(ParallelMap, KeepsIndexOrder) {
  const auto v = parallel_map<int>(100, 4, [](std::size_t i) { return static_cast<int>(i * i); });
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], static_cast<int>(i * i));
}

}  // namespace
}  // namespace divbar
