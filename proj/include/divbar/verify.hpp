#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "divbar/topology.hpp"

namespace divbar {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  bool skipped = false;
  std::string skip_reason;
  std::vector<Check> checks;

  bool passed() const;
};

struct VerifyOptions {
  long long epochs = 200000;      // Monte-Carlo epochs (phi, qprobs, epochlen)
  long long flow_slots = 1000000; // Monte-Carlo slots (theta1)
  long long samples = 1000000;    // pair samples (lemma1 convolution spot check)
  int snapshots = 100;            // random backlog snapshots (phi)
  int trials = 2000;              // coupled decode trials per link (coupling)
};

const std::vector<std::string>& verify_suite_names();

/// Runs one named suite against a scenario. Throws ConfigError for an
/// unknown suite name.
SuiteReport run_verify_suite(const Scenario& scenario, const std::string& suite,
                             const VerifyOptions& options = {});

void print_report(std::ostream& out, const SuiteReport& report);

}  // namespace divbar
