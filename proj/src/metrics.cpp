#include "csigpt/metrics.hpp"

#include "csigpt/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace csigpt::expcli {

fs::path metrics_meta_path(const fs::path& metrics) {
  fs::path p = metrics;
  p += ".meta.json";
  return p;
}

MetricsWriter::MetricsWriter(fs::path path, std::string config_hash, std::string command)
    : path_(std::move(path)), config_hash_(std::move(config_hash)), command_(std::move(command)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  out_.open(path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot write " + path_.string());
}

MetricsWriter::~MetricsWriter() {
  try {
    close();
  } catch (...) {
  }
}

void MetricsWriter::write(const json& record) {
  if (closed_) throw std::logic_error("MetricsWriter: write after close");
  out_ << record.dump() << '\n';
  ++lines_;
}

void MetricsWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.close();
  const json meta = {{"config_hash", config_hash_},
                     {"command", command_},
                     {"lines", lines_},
                     {"sha256", io::sha256_file(path_)}};
  io::write_text(metrics_meta_path(path_), meta.dump(2) + "\n");
}

std::vector<json> read_metrics(const fs::path& path) {
  std::vector<json> out;
  std::istringstream in(io::read_text(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      throw IntegrityError(path.string() + ":" + std::to_string(n) + ": malformed JSON line");
    }
  }
  return out;
}

void validate_metrics(const fs::path& path, const std::string& config_hash) {
  const fs::path meta_path = metrics_meta_path(path);
  if (!fs::exists(meta_path)) throw IntegrityError(path.string() + ": missing " + meta_path.string());
  const json meta = io::read_json(meta_path);
  if (meta.value("config_hash", "") != config_hash) {
    throw IntegrityError(path.string() + ": produced under config " + meta.value("config_hash", "?") +
                         ", expected " + config_hash);
  }
  if (meta.value("sha256", "") != io::sha256_file(path)) {
    throw IntegrityError(path.string() + ": content does not match its sidecar hash");
  }
}

std::vector<PlotSeries> extract_series(const std::vector<json>& records, const std::string& x_key,
                                       const std::string& y_key, const std::string& series_key) {
  std::vector<PlotSeries> out;
  for (const auto& r : records) {
    if (!r.is_object() || !r.contains(x_key) || !r.contains(y_key)) continue;
    if (!r[x_key].is_number() || !r[y_key].is_number()) continue;
    std::string name = y_key;
    if (!series_key.empty()) {
      if (!r.contains(series_key)) continue;
      const json& s = r[series_key];
      name = s.is_string() ? s.get<std::string>() : s.dump();
    }
    auto it = std::find_if(out.begin(), out.end(), [&](const PlotSeries& p) { return p.name == name; });
    if (it == out.end()) {
      out.push_back({name, {}, {}});
      it = std::prev(out.end());
    }
    it->x.push_back(r[x_key].get<double>());
    it->y.push_back(r[y_key].get<double>());
  }
  return out;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

std::string tick(double v) {
  std::ostringstream ss;
  ss << std::setprecision(4) << v;
  return ss.str();
}

}  // namespace

void write_series_csv(const fs::path& path, const std::vector<PlotSeries>& series,
                      const std::string& x_key, const std::string& y_key) {
  std::string out = "series," + csv_escape(x_key) + "," + csv_escape(y_key) + "\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out += csv_escape(s.name) + "," + num(s.x[i]) + "," + num(s.y[i]) + "\n";
    }
  }
  io::write_text(path, out);
}

void write_series_svg(const fs::path& path, const std::vector<PlotSeries>& series,
                      const std::string& x_key, const std::string& y_key) {
  constexpr double W = 640, H = 420, L = 70, R = 160, T = 20, B = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
        << tick(xv) << "</text>\n"
        << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
        << tick(yv) << "</text>\n";
  }
  svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" font-size=\"13\" text-anchor=\"middle\">"
      << xml_escape(x_key) << "</text>\n"
      << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\">" << xml_escape(y_key) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 7];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      svg << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    svg << "\"/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(k);
    svg << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly - 4
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << W - R + 36 << "\" y=\"" << ly << "\" font-size=\"11\">" << xml_escape(s.name)
        << "</text>\n";
  }
  svg << "</svg>\n";
  io::write_text(path, svg.str());
}

}  // namespace csigpt::expcli
