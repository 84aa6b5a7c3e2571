#pragma once
// Experiment harness: plain-text config files, deterministic execution,
// CSV/JSON reports.
//
// Config format: one "key = value" per line, '#' starts a comment, keys are
// dotted paths, values are scalars or whitespace-separated number lists.
// Every file must carry schema_version = 1.  Parse errors identify the line
// and key.
//
// Outputs (under the chosen output directory):
//   report.csv       one row per sweep point, fixed column order:
//                    epsilon,p,lambda,c,T,error_lp,stderr,eta_at_scale,
//                    a1,a2,a3,replicas,seed
//   report.json      the same rows plus slope fits, eta/gap tables, and the
//                    machine-readable results of every enabled check
//   diagnostics.json run metadata: config hash, build id, rng identifier,
//                    tolerances, truncation bias, calibration results
//
// Every output is a pure function of (config bytes, seed): no timestamps,
// timings, or worker counts appear in any file, so identical runs are
// byte-identical regardless of parallelism.
//
// The process exit code is 0 iff every enabled check passed; each failed
// check is recorded with the observed value, the bound it violated, and the
// standard error, never as a bare flag.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace fm::harness {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Config {
  std::string path;
  // key -> (value text, line number)
  std::map<std::string, std::pair<std::string, int>> kv;
  // keys read successfully so far; anything still unread after building a
  // run is a typo
  mutable std::set<std::string> used;

  bool has(const std::string& key) const { return kv.count(key) != 0; }
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_num(const std::string& key) const;
  double get_num(const std::string& key, double dflt) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long dflt) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<double> get_list(const std::string& key,
                               std::vector<double> dflt) const;
  std::vector<std::string> unused_keys() const;
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const;
};

Config parse_config_text(const std::string& text, const std::string& path);
Config parse_config_file(const std::string& path);

// FNV-1a 64-bit hash of the raw config bytes, hex-encoded.
std::string config_hash(const std::string& text);

struct RunOptions {
  std::string config_path;
  std::string out_dir = ".";
  int workers = 0;                    // 0: FOLIATED_MARCUS_WORKERS or hardware
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::string experiment;             // overrides the config experiment
};

struct RunResult {
  int exit_code = 0;
  std::string csv_path, report_path, diagnostics_path;
};

RunResult run(const RunOptions& opts);

// Exposed for tests: format one CSV row exactly as report.csv does.
std::string csv_header();

} // namespace fm::harness
