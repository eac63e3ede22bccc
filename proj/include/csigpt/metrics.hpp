#pragma once

// JSON-lines metrics with a "<file>.meta.json" sidecar binding the file to a
// config hash, and SVG/CSV plots derived from metrics files alone.

#include "csigpt/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace csigpt::expcli {

namespace fs = std::filesystem;

fs::path metrics_meta_path(const fs::path& metrics);

class MetricsWriter {
 public:
  MetricsWriter(fs::path path, std::string config_hash, std::string command);
  ~MetricsWriter();
  MetricsWriter(const MetricsWriter&) = delete;
  MetricsWriter& operator=(const MetricsWriter&) = delete;

  void write(const json& record);
  // Flushes and writes the sidecar; called by the destructor if needed.
  void close();
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::string config_hash_;
  std::string command_;
  std::ofstream out_;
  std::size_t lines_ = 0;
  bool closed_ = false;
};

std::vector<json> read_metrics(const fs::path& path);

// Throws IntegrityError unless the sidecar names `config_hash` and the file
// content hash matches.
void validate_metrics(const fs::path& path, const std::string& config_hash);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Groups records that carry both keys by the value of `series_key` (empty:
// one series). Records are kept in file order.
std::vector<PlotSeries> extract_series(const std::vector<json>& records, const std::string& x_key,
                                       const std::string& y_key, const std::string& series_key);

void write_series_csv(const fs::path& path, const std::vector<PlotSeries>& series,
                      const std::string& x_key, const std::string& y_key);
void write_series_svg(const fs::path& path, const std::vector<PlotSeries>& series,
                      const std::string& x_key, const std::string& y_key);

}  // namespace csigpt::expcli
