#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opeval/mdp.hpp"

namespace opeval {

/// Invalid or inconsistent configuration; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text with [section] headers; '#' starts a comment.
/// Keys remember their line for error messages.
class ConfigFile {
 public:
  static ConfigFile parse(const std::filesystem::path& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin);

  bool has(const std::string& section, const std::string& key) const;
  std::string require_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  double require_double(const std::string& section, const std::string& key) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;

  const std::string& raw_bytes() const { return raw_; }
  std::uint64_t hash() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::string raw_;
  std::string origin_;

  const Entry* find(const std::string& section, const std::string& key) const;
  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& what) const;
};

enum class Mode { Simulate, Evaluate, Diagnose, Sweep, Compare };
Mode parse_mode(const std::string& name);

struct RunOptions {
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed_override;
  bool fast = false;
};

/// Runs one experiment mode end to end and writes every artifact (CSVs,
/// summary, plot script) into out_dir. Throws ConfigError for bad inputs and
/// NumericalError when a solve fails.
void run_experiment(Mode mode, const RunOptions& options);

enum class Verdict { Distinguishable, Indistinguishable };

struct ComparisonVerdict {
  double rmse = 0.0;
  double value_gap = 0.0;
  Verdict verdict = Verdict::Indistinguishable;
};

/// A policy pair is distinguishable exactly when the estimation error is
/// smaller than the value gap.
ComparisonVerdict compare_policies(double rmse, double value_gap);

enum class PlotLayout { SinglePanel, SimPanels };

/// Text of a standalone matplotlib script that renders the named CSVs; the
/// text depends only on the arguments.
std::string plot_script_text(const std::vector<std::string>& csv_names,
                             const std::vector<std::string>& labels, PlotLayout layout,
                             const std::string& out_image);

void emit_plot_script(const std::filesystem::path& script_path,
                      const std::vector<std::string>& csv_names,
                      const std::vector<std::string>& labels, PlotLayout layout,
                      const std::string& out_image);

}  // namespace opeval
