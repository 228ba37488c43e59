// divbar-sim: simulate, sweep and verify DIVBAR-family routing scenarios.

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "divbar/analytics.hpp"
#include "divbar/csv.hpp"
#include "divbar/engine.hpp"
#include "divbar/errors.hpp"
#include "divbar/topology.hpp"
#include "divbar/verify.hpp"

namespace {

using namespace divbar;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIntegrity = 3;

Scenario load_valid(const std::string& path, double h0_override) {
  Scenario sc = load_scenario(path);
  if (h0_override > 0.0) sc.topology = sc.topology.with_h0(h0_override);
  const auto errs = validate(sc.topology);
  if (!errs.empty()) {
    std::string msg = path + ": invalid scenario";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return sc;
}

// Output goes to `path`, or stdout for "-".
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw ConfigError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "a:b:step" (inclusive range) or "x,y,z".
std::vector<double> parse_multipliers(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(std::stod(item));
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
      throw ConfigError("multipliers range must be start:stop:step with step > 0");
    }
    const auto count = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
    for (long i = 0; i < count; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  } else {
    for (const auto& item : split_list(spec)) out.push_back(std::stod(item));
  }
  if (out.empty()) throw ConfigError("no multipliers given");
  for (double m : out) {
    if (!(m >= 0.0)) throw ConfigError("multipliers must be nonnegative");
  }
  return out;
}

struct Common {
  std::string scenario;
  double h0 = 0.0;
  long long seed = -1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("scenario", c.scenario, "scenario JSON file")->required();
  app->add_option("--h0", c.h0, "override packet entropy H0 (bits)");
  app->add_option("--seed", c.seed, "override the scenario seed");
}

void apply_seed(Scenario& sc, const Common& c) {
  if (c.seed >= 0) sc.seed = static_cast<std::uint64_t>(c.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divbar-sim: backpressure routing with mutual information accumulation"};
  app.require_subcommand(1);

  Common sim_c;
  std::string policy = "rmia";
  long long sim_slots = 0;
  double sim_mult = 1.0;
  std::string sim_out = "-";
  std::string sim_trace;
  auto* sim = app.add_subcommand("simulate", "single run, writes the metrics CSV");
  add_common(sim, sim_c);
  sim->add_option("--policy", policy, "rep, rmia or mia");
  sim->add_option("--slots", sim_slots, "override the scenario horizon");
  sim->add_option("--multiplier", sim_mult, "scale every arrival rate");
  sim->add_option("--out", sim_out, "metrics CSV path, - for stdout");
  sim->add_option("--trace", sim_trace, "event trace path");

  Common sw_c;
  std::string policies = "rep,rmia,mia";
  std::string multipliers;
  bool bisect = false;
  int replicas = 3;
  long long sw_slots = 200000;
  int iterations = 8;
  double lo = 0.0, hi = 1.0;
  int jobs = 1;
  std::string sw_out = "-";
  auto* sw = app.add_subcommand("sweep", "grid or bisection over arrival-rate multipliers");
  add_common(sw, sw_c);
  sw->add_option("--policies", policies, "comma-separated policy list");
  auto* mult_opt = sw->add_option("--multipliers", multipliers, "start:stop:step or a,b,c");
  auto* bis_opt = sw->add_flag("--bisect", bisect, "search the largest stable multiplier");
  mult_opt->excludes(bis_opt);
  sw->add_option("--replicas", replicas, "replicas per point (seeds seed+r)")->check(CLI::PositiveNumber);
  sw->add_option("--slots", sw_slots, "slots per replica")->check(CLI::PositiveNumber);
  sw->add_option("--iterations", iterations, "bisection iterations")->check(CLI::PositiveNumber);
  sw->add_option("--lo", lo, "bisection lower bracket");
  sw->add_option("--hi", hi, "bisection upper bracket");
  sw->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  sw->add_option("--out", sw_out, "sweep CSV path, - for stdout");

  Common ver_c;
  std::string suite;
  VerifyOptions vopt;
  auto* ver = app.add_subcommand("verify", "run an oracle suite");
  add_common(ver, ver_c);
  ver->add_option("--suite", suite, "lemma1, phi, qprobs, epochlen, theta1, coupling")->required();
  ver->add_option("--epochs", vopt.epochs, "Monte-Carlo epochs")->check(CLI::PositiveNumber);
  ver->add_option("--flow-slots", vopt.flow_slots, "Monte-Carlo slots for flow checks")
      ->check(CLI::PositiveNumber);
  ver->add_option("--trials", vopt.trials, "coupled trials per link")->check(CLI::PositiveNumber);

  Common tab_c;
  int from = 0, to = 1, max_order = kDefaultMaxOrder, cells = kDefaultGridCells;
  std::string tab_out = "-";
  auto* tab = app.add_subcommand("table", "dump the convolution table of one link");
  add_common(tab, tab_c);
  tab->add_option("--from", from, "transmitter")->required();
  tab->add_option("--to", to, "receiver")->required();
  tab->add_option("--max-order", max_order, "highest order M")->check(CLI::PositiveNumber);
  tab->add_option("--cells", cells, "grid cells over [0, H0]")->check(CLI::PositiveNumber);
  tab->add_option("--out", tab_out, "CSV path, - for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sim) {
      Scenario sc = load_valid(sim_c.scenario, sim_c.h0);
      apply_seed(sc, sim_c);
      if (sim_slots > 0) sc.slots = sim_slots;
      SimConfig cfg = make_sim_config(sc, parse_policy_kind(policy));
      if (sim_mult != 1.0) cfg.topology = cfg.topology.scaled(sim_mult);
      if (auto errs = validate(cfg.topology); !errs.empty()) throw ConfigError(errs.front());
      std::unique_ptr<Sink> trace;
      if (!sim_trace.empty()) {
        trace = std::make_unique<Sink>(sim_trace);
        trace->stream().precision(9);
        cfg.trace = &trace->stream();
      }
      Sink out(sim_out);
      const auto res = run(cfg);
      write_metrics_csv(out.stream(), res.metrics);
      std::cerr << "delivered " << res.final_state.delivered_count() << " packets, time-average occupancy "
                << format_number(res.metrics.time_avg_occupancy()) << '\n';
      return kExitOk;
    }

    if (*sw) {
      Scenario sc = load_valid(sw_c.scenario, sw_c.h0);
      apply_seed(sc, sw_c);
      sc.slots = sw_slots;
      const auto names = split_list(policies);
      if (names.empty()) throw ConfigError("empty policy list");
      if (!bisect && multipliers.empty()) throw ConfigError("give --multipliers or --bisect");
      std::vector<PolicyKind> kinds;
      for (const auto& n : names) {
        const auto k = parse_policy_kind(n);
        if (k == PolicyKind::kStationaryRandomized) throw ConfigError("sweeps take rep, rmia or mia");
        kinds.push_back(k);
      }
      const auto curves = build_link_curves(sc.topology);
      std::vector<SweepRow> rows;
      if (bisect) {
        for (auto k : kinds) {
          SimConfig cfg = make_sim_config(sc, k);
          cfg.curves = curves;
          BisectionOptions opt{lo, hi, iterations, replicas, jobs};
          auto res = max_stable_rate_search(cfg, opt);
          std::cerr << "max_stable " << to_string(k) << ' ' << format_number(res.max_stable_multiplier)
                    << '\n';
          rows.insert(rows.end(), res.rows.begin(), res.rows.end());
        }
      } else {
        const auto mults = parse_multipliers(multipliers);
        struct Task {
          PolicyKind kind;
          double mult;
          int replica;
        };
        std::vector<Task> tasks;
        for (auto k : kinds) {
          for (double m : mults) {
            for (int r = 0; r < replicas; ++r) tasks.push_back({k, m, r});
          }
        }
        for (double m : mults) {
          if (auto errs = validate(sc.topology.scaled(m)); !errs.empty()) {
            throw ConfigError("multiplier " + format_number(m) + ": " + errs.front());
          }
        }
        rows = parallel_map<SweepRow>(tasks.size(), jobs, [&](std::size_t i) {
          SimConfig cfg = make_sim_config(sc, tasks[i].kind);
          cfg.curves = curves;
          return run_sweep_point(cfg, tasks[i].mult, tasks[i].replica);
        });
      }
      Sink out(sw_out);
      write_sweep_csv(out.stream(), rows);
      return kExitOk;
    }

    if (*ver) {
      Scenario sc = load_valid(ver_c.scenario, ver_c.h0);
      apply_seed(sc, ver_c);
      const auto report = run_verify_suite(sc, suite, vopt);
      print_report(std::cout, report);
      return report.passed() ? kExitOk : kExitFailed;
    }

    if (*tab) {
      Scenario sc = load_valid(tab_c.scenario, tab_c.h0);
      const auto& t = sc.topology;
      if (!t.has_link(from, to)) throw ConfigError("no link " + std::to_string(from) + "->" + std::to_string(to));
      const auto table = build_cdf_table(t.channel(from, to), t.h0(), t.h0() / cells, max_order);
      Sink out(tab_out);
      write_table_csv(out.stream(), table);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IntegrityFault& e) {
    std::cerr << "integrity fault: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitOk;
}
