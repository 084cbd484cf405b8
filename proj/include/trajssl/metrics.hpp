#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trajssl/errors.hpp"

namespace trajssl {

struct MetricsRecord {
  std::string scenario;
  std::string layer;
  double accuracy = 0.0;
  int n_eval = 0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
};

// Wall times are recorded in metrics files only when TRAJSSL_TIMINGS=1 is
// set; the default writes 0.000 so identical runs produce byte-identical
// outputs. Measured times still reach the console log.
inline bool timings_enabled() {
  const char* v = std::getenv("TRAJSSL_TIMINGS");
  return v != nullptr && std::string(v) == "1";
}

inline std::string format_metrics_csv(const std::vector<MetricsRecord>& records) {
  const bool timings = timings_enabled();
  std::string out = "scenario,layer,accuracy,n_eval,seed,wall_time_s\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%d,%llu,%.3f\n",
                  r.scenario.c_str(), r.layer.c_str(), r.accuracy, r.n_eval,
                  static_cast<unsigned long long>(r.seed),
                  timings ? r.wall_time_s : 0.0);
    out += buf;
  }
  return out;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path);
  out << format_metrics_csv(records);
  if (!out) throw IoError("write failed for " + path);
}

inline void write_metrics_json(const std::string& path,
                               const std::vector<MetricsRecord>& records) {
  const bool timings = timings_enabled();
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    arr.push_back({{"scenario", r.scenario},
                   {"layer", r.layer},
                   {"accuracy", r.accuracy},
                   {"n_eval", r.n_eval},
                   {"seed", r.seed},
                   {"wall_time_s", timings ? r.wall_time_s : 0.0}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path);
  out << arr.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path);
}

inline std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path);
  std::vector<MetricsRecord> records;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    MetricsRecord r;
    std::getline(ss, r.scenario, ',');
    std::getline(ss, r.layer, ',');
    std::getline(ss, field, ',');
    r.accuracy = std::stod(field);
    std::getline(ss, field, ',');
    r.n_eval = std::stoi(field);
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, field, ',');
    r.wall_time_s = std::stod(field);
    records.push_back(std::move(r));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Cross-run report: mean +- std per (method, scenario, layer) and the
// traj-minus-baseline delta where both methods are present.
// ---------------------------------------------------------------------------

struct RunMetrics {
  std::string label;  // "baseline" or "traj"
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
};

struct ReportRow {
  std::string method, scenario, layer;
  double mean = 0.0;
  double stddev = 0.0;
  int n_runs = 0;
};

struct Report {
  std::vector<ReportRow> rows;
  // delta = mean(traj) - mean(baseline) keyed by "scenario,layer".
  std::map<std::string, double> deltas;
  std::vector<std::string> warnings;
};

inline Report merge_runs(const std::vector<RunMetrics>& runs) {
  Report report;
  std::map<std::string, std::vector<double>> groups;
  std::map<std::string, std::set<std::uint64_t>> seeds_per_method;
  for (const auto& run : runs) {
    seeds_per_method[run.label].insert(run.seed);
    for (const auto& r : run.records) {
      groups[run.label + "," + r.scenario + "," + r.layer].push_back(r.accuracy);
    }
  }
  if (seeds_per_method.size() == 2) {
    auto it = seeds_per_method.begin();
    const auto& a = *it++;
    const auto& b = *it;
    if (a.second != b.second) {
      report.warnings.push_back(
          "seed sets differ between method groups `" + a.first + "` and `" +
          b.first + "`; deltas compare different seeds");
    }
  }

  std::map<std::string, std::map<std::string, double>> means_by_cell;
  for (const auto& [key, accs] : groups) {
    const auto c1 = key.find(',');
    const auto c2 = key.find(',', c1 + 1);
    ReportRow row;
    row.method = key.substr(0, c1);
    row.scenario = key.substr(c1 + 1, c2 - c1 - 1);
    row.layer = key.substr(c2 + 1);
    row.n_runs = int(accs.size());
    double m = 0.0;
    for (double a : accs) m += a;
    m /= double(accs.size());
    double v = 0.0;
    for (double a : accs) v += (a - m) * (a - m);
    row.mean = m;
    row.stddev = accs.size() > 1 ? std::sqrt(v / double(accs.size() - 1)) : 0.0;
    means_by_cell[row.scenario + "," + row.layer][row.method] = m;
    report.rows.push_back(std::move(row));
  }
  for (const auto& [cell, methods] : means_by_cell) {
    auto t = methods.find("traj");
    auto b = methods.find("baseline");
    if (t != methods.end() && b != methods.end()) {
      report.deltas[cell] = t->second - b->second;
    }
  }
  return report;
}

inline std::string format_report_csv(const Report& report) {
  std::string out = "method,scenario,layer,mean_accuracy,std_accuracy,n_runs,delta_vs_baseline\n";
  char buf[320];
  for (const auto& r : report.rows) {
    const auto d = report.deltas.find(r.scenario + "," + r.layer);
    std::string delta = "";
    if (r.method == "traj" && d != report.deltas.end()) {
      char db[64];
      std::snprintf(db, sizeof(db), "%.6f", d->second);
      delta = db;
    }
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.6f,%.6f,%d,%s\n",
                  r.method.c_str(), r.scenario.c_str(), r.layer.c_str(), r.mean,
                  r.stddev, r.n_runs, delta.c_str());
    out += buf;
  }
  return out;
}

inline std::string format_report_text(const Report& report) {
  std::string out;
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%-10s %-20s %-18s %10s %8s %6s %10s\n",
                "method", "scenario", "layer", "mean", "std", "runs", "delta");
  out += buf;
  for (const auto& r : report.rows) {
    const auto d = report.deltas.find(r.scenario + "," + r.layer);
    std::string delta = "-";
    if (r.method == "traj" && d != report.deltas.end()) {
      char db[64];
      std::snprintf(db, sizeof(db), "%+.4f", d->second);
      delta = db;
    }
    std::snprintf(buf, sizeof(buf), "%-10s %-20s %-18s %10.4f %8.4f %6d %10s\n",
                  r.method.c_str(), r.scenario.c_str(), r.layer.c_str(), r.mean,
                  r.stddev, r.n_runs, delta.c_str());
    out += buf;
  }
  for (const auto& w : report.warnings) {
    out += "warning: " + w + "\n";
  }
  return out;
}

}  // namespace trajssl
