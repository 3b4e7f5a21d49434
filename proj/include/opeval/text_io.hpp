#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace opeval {

/// Formats a double as the shortest decimal string that parses back to the
/// exact same bits. Used by every serializer so save/load round-trips exactly.
std::string format_double(double v);

double parse_double(const std::string& s);

/// Line-oriented `key value...` text files. '#' starts a comment, blank lines
/// are skipped. Values keep their order of appearance (keys may repeat, e.g.
/// one `transition` line per state-action pair).
struct KvLine {
  std::string key;
  std::vector<std::string> fields;
};

std::vector<KvLine> read_kv_file(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

/// CSV writer with the provenance comment contract: first line is
/// `# seed=<seed>, config_hash=<hex>` (when provenance is set), second the
/// header, then data rows. Numeric cells go through format_double.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void set_provenance(std::uint64_t seed, std::uint64_t config_hash);
  void add_row(const std::vector<std::string>& cells);
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  bool has_provenance_ = false;
  std::uint64_t seed_ = 0;
  std::uint64_t config_hash_ = 0;
};

/// Parsed CSV: comment lines dropped, header split on commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);

/// FNV-1a over raw bytes; used to stamp output files with the config they
/// came from.
std::uint64_t fnv1a_hash(const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace opeval
