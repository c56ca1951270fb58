#pragma once

// CSV ingestion/serialization for spectra, time series and generic numeric
// tables. Floats are written with 17 significant digits so a save/load cycle
// is bit-exact.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nvtherm/errors.hpp"
#include "nvtherm/lineshape.hpp"
#include "nvtherm/sensitivity.hpp"

namespace nvtherm::io {

inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view text, std::size_t line) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ParseError(line, "not a number: '" + std::string(text) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

// Numeric table with a named header row. Lines starting with '#' before the
// header are returned as comments.
struct Table {
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[j]);
    return out;
  }
};

inline Table parse_table(const std::string& text) {
  const auto lines = lines_of(text);
  Table t;
  std::size_t i = 0;
  while (i < lines.size() && !lines[i].empty() && lines[i][0] == '#') t.comments.push_back(lines[i++]);
  if (i >= lines.size() || trim(lines[i]).empty()) throw ParseError(i + 1, "missing header row");
  for (auto c : split(lines[i], ',')) t.columns.emplace_back(trim(c));
  ++i;
  for (; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto cells = split(lines[i], ',');
    if (cells.size() != t.columns.size())
      throw ParseError(i + 1, "expected " + std::to_string(t.columns.size()) + " cells, found " +
                                  std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto c : cells) row.push_back(parse_double(c, i + 1));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string format_table(const Table& t) {
  std::string out;
  for (const auto& c : t.comments) out += c + "\n";
  for (std::size_t j = 0; j < t.columns.size(); ++j) out += (j ? "," : "") + t.columns[j];
  out += "\n";
  for (const auto& r : t.rows) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) out += ",";
      out += format_double(r[j]);
    }
    out += "\n";
  }
  return out;
}

inline Table load_table_csv(const std::string& path) { return parse_table(read_file(path)); }
inline void save_table_csv(const std::string& path, const Table& t) { write_file(path, format_table(t)); }

// ---------------------------------------------------------------------------
// Spectrum: header `frequency_hz,signal`.

inline Spectrum parse_spectrum_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || trim(lines[0]) != "frequency_hz,signal")
    throw ParseError(1, "expected header 'frequency_hz,signal'");
  Spectrum s;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto cells = split(lines[i], ',');
    if (cells.size() != 2) throw ParseError(i + 1, "expected 2 cells");
    const double f = parse_double(cells[0], i + 1);
    const double y = parse_double(cells[1], i + 1);
    if (!s.freqs.empty() && !(f > s.freqs.back())) throw ParseError(i + 1, "frequency not strictly increasing");
    s.freqs.push_back(f);
    s.signal.push_back(y);
  }
  return s;
}

inline std::string format_spectrum_csv(const Spectrum& s) {
  std::string out = "frequency_hz,signal\n";
  for (std::size_t i = 0; i < s.size(); ++i) out += format_double(s.freqs[i]) + "," + format_double(s.signal[i]) + "\n";
  return out;
}

inline Spectrum load_spectrum_csv(const std::string& path) { return parse_spectrum_csv(read_file(path)); }
inline void save_spectrum_csv(const std::string& path, const Spectrum& s) { write_file(path, format_spectrum_csv(s)); }

// ---------------------------------------------------------------------------
// Time series: `# sample_rate_hz=<float>` then a `voltage_v` column.

inline TimeSeries parse_timeseries_csv(const std::string& text) {
  const auto lines = lines_of(text);
  constexpr std::string_view key = "# sample_rate_hz=";
  if (lines.empty() || lines[0].rfind(key, 0) != 0) throw ParseError(1, "missing '# sample_rate_hz=' header");
  TimeSeries ts;
  ts.sample_rate = parse_double(std::string_view(lines[0]).substr(key.size()), 1);
  if (lines.size() < 2 || trim(lines[1]) != "voltage_v") throw ParseError(2, "expected column header 'voltage_v'");
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    ts.samples.push_back(parse_double(lines[i], i + 1));
  }
  if (ts.samples.size() < 2) throw Error(ErrorCode::insufficient_data, "time series has fewer than 2 samples");
  if (!(ts.sample_rate > 0.0)) throw ParseError(1, "sample rate must be positive");
  return ts;
}

inline std::string format_timeseries_csv(const TimeSeries& ts) {
  std::string out = "# sample_rate_hz=" + format_double(ts.sample_rate) + "\nvoltage_v\n";
  for (double v : ts.samples) out += format_double(v) + "\n";
  return out;
}

inline TimeSeries load_timeseries_csv(const std::string& path) { return parse_timeseries_csv(read_file(path)); }
inline void save_timeseries_csv(const std::string& path, const TimeSeries& ts) {
  write_file(path, format_timeseries_csv(ts));
}

}  // namespace nvtherm::io
