#include <cmath>
#include <fstream>
#include <sstream>

#include "divbar/errors.hpp"
#include "divbar/topology.hpp"
#include "json.hpp"

namespace divbar {
namespace {

using json = nlohmann::json;
using ordered = nlohmann::ordered_json;

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad field '" + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  return obj.contains(key) ? get_field<T>(obj, key, where) : fallback;
}

ChannelModel parse_channel(const json& l, const std::string& where) {
  const int kinds = static_cast<int>(l.contains("mean_snr")) +
                    static_cast<int>(l.contains("mean_snr_db")) +
                    static_cast<int>(l.contains("atoms"));
  if (kinds != 1) {
    throw ConfigError(where + ": exactly one of mean_snr, mean_snr_db, atoms is required");
  }
  try {
    if (l.contains("mean_snr")) return ChannelModel::rayleigh(get_field<double>(l, "mean_snr", where));
    if (l.contains("mean_snr_db")) {
      const double db = get_field<double>(l, "mean_snr_db", where);
      return ChannelModel::rayleigh(std::pow(10.0, db / 10.0));
    }
    std::vector<RateAtom> atoms;
    const auto& arr = l.at("atoms");
    if (!arr.is_array()) throw ConfigError(where + ": atoms must be an array");
    for (const auto& a : arr) {
      if (!a.is_array() || a.size() != 2) throw ConfigError(where + ": atom must be [rate, prob]");
      atoms.push_back({a[0].get<double>(), a[1].get<double>()});
    }
    return ChannelModel::discrete(std::move(atoms));
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
  const std::string top = "scenario";
  const int nodes = get_field<int>(doc, "nodes", top);
  const double h0 = get_field<double>(doc, "h0_bits", top);
  const int a_max = get_or<int>(doc, "a_max", 1, top);

  std::vector<Link> links;
  if (doc.contains("links")) {
    const auto& arr = doc.at("links");
    if (!arr.is_array()) throw ConfigError("scenario: links must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "links[" + std::to_string(i) + "]";
      const auto& l = arr[i];
      links.push_back({get_field<int>(l, "from", where), get_field<int>(l, "to", where),
                       parse_channel(l, where)});
    }
  }
  std::vector<Arrival> arrivals;
  if (doc.contains("arrivals")) {
    const auto& arr = doc.at("arrivals");
    if (!arr.is_array()) throw ConfigError("scenario: arrivals must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "arrivals[" + std::to_string(i) + "]";
      const auto& a = arr[i];
      arrivals.push_back({get_field<int>(a, "source", where), get_field<int>(a, "commodity", where),
                          get_field<double>(a, "rate", where)});
    }
  }

  Scenario s;
  s.topology = Topology(nodes, h0, a_max, std::move(links), std::move(arrivals));
  s.seed = get_or<std::uint64_t>(doc, "seed", 1, top);
  s.slots = get_or<long long>(doc, "slots", 10000, top);
  if (s.slots < 1) throw ConfigError("scenario: slots must be >= 1");
  const auto proc = get_or<std::string>(doc, "arrival_process", "bernoulli_batch", top);
  if (proc == "bernoulli_batch") {
    s.arrival_process = ArrivalProcess::kBernoulliBatch;
  } else if (proc == "poisson") {
    s.arrival_process = ArrivalProcess::kPoisson;
  } else {
    throw ConfigError("scenario: arrival_process must be bernoulli_batch or poisson");
  }
  const auto ledger = get_or<std::string>(doc, "mia_loser_ledger", "retain", top);
  if (ledger == "retain") {
    s.mia_loser_ledger = LoserLedger::kRetain;
  } else if (ledger == "clear") {
    s.mia_loser_ledger = LoserLedger::kClear;
  } else {
    throw ConfigError("scenario: mia_loser_ledger must be retain or clear");
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string serialize_scenario(const Scenario& s) {
  const auto& t = s.topology;
  ordered doc;
  doc["nodes"] = t.node_count();
  doc["h0_bits"] = t.h0();
  doc["a_max"] = t.a_max();
  doc["seed"] = s.seed;
  doc["slots"] = s.slots;
  doc["arrival_process"] =
      s.arrival_process == ArrivalProcess::kPoisson ? "poisson" : "bernoulli_batch";
  doc["mia_loser_ledger"] = s.mia_loser_ledger == LoserLedger::kClear ? "clear" : "retain";
  ordered links = ordered::array();
  for (const auto& l : t.links()) {
    ordered e;
    e["from"] = l.from;
    e["to"] = l.to;
    if (const auto* r = std::get_if<RayleighFading>(&l.model.kind())) {
      e["mean_snr"] = r->mean_snr;
    } else {
      ordered atoms = ordered::array();
      for (const auto& a : std::get<DiscreteTest>(l.model.kind()).atoms) {
        atoms.push_back(ordered::array({a.rate, a.prob}));
      }
      e["atoms"] = atoms;
    }
    links.push_back(e);
  }
  doc["links"] = links;
  ordered arrivals = ordered::array();
  for (const auto& a : t.arrivals()) {
    ordered e;
    e["source"] = a.source;
    e["commodity"] = a.commodity;
    e["rate"] = a.rate;
    arrivals.push_back(e);
  }
  doc["arrivals"] = arrivals;
  return doc.dump(2) + "\n";
}

}  // namespace divbar
