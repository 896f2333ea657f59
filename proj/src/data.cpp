#include "dyncov/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string_view>

#include "dyncov/error.hpp"

namespace dyncov {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> to_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* first = cell.data();
  if (*first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

bool is_label_header(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const char* k : {"date", "time", "timestamp", "datetime", "index", "step", "t", "dataset"}) {
    if (name == k) return true;
  }
  return false;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

RawTable parse_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!is_blank(line)) {
      header = split(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorKind::EmptyFile, "file has no header row");

  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) {
      fail(ErrorKind::HeaderMismatch, "line " + std::to_string(line_no) + " has " +
                                          std::to_string(cells.size()) + " cells, header has " +
                                          std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) fail(ErrorKind::EmptyFile, "file has a header but no data rows");

  const bool has_time = is_label_header(header.front()) || !to_number(rows.front().front());
  const std::size_t first_value = has_time ? 1 : 0;
  if (header.size() <= first_value) fail(ErrorKind::HeaderMismatch, "no numeric columns");

  RawTable table;
  table.columns.assign(header.begin() + static_cast<std::ptrdiff_t>(first_value), header.end());
  const auto ncols = static_cast<Eigen::Index>(table.columns.size());
  std::vector<double> buffer;
  Eigen::Index kept = 0;
  table.values.resize(static_cast<Eigen::Index>(rows.size()), ncols);
  for (const auto& cells : rows) {
    buffer.clear();
    for (std::size_t c = first_value; c < cells.size(); ++c) {
      const auto v = to_number(cells[c]);
      if (!v) break;
      buffer.push_back(*v);
    }
    if (static_cast<Eigen::Index>(buffer.size()) != ncols) {
      ++table.dropped_rows;
      continue;
    }
    for (Eigen::Index c = 0; c < ncols; ++c) table.values(kept, c) = buffer[static_cast<std::size_t>(c)];
    if (has_time) table.timestamps.push_back(cells.front());
    ++kept;
  }
  table.values.conservativeResize(kept, ncols);
  return table;
}

RawTable load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FileNotFound, "cannot open " + path);
  return parse_csv(in);
}

Returns to_returns(const Matrix& prices, ReturnKind kind, int stale_gap) {
  const Eigen::Index n = prices.rows();
  const Eigen::Index d = prices.cols();
  if (n < 2) fail(ErrorKind::TooFewObservations, "returns need at least two price rows");
  if (stale_gap < 1) fail(ErrorKind::InvalidArgument, "stale gap must be >= 1");
  if (kind == ReturnKind::log && (prices.array() <= 0.0).any()) {
    fail(ErrorKind::NonPositivePrice, "log returns need strictly positive prices");
  }
  if (kind == ReturnKind::simple && (prices.topRows(n - 1).array() == 0.0).any()) {
    fail(ErrorKind::NonPositivePrice, "simple returns need nonzero prices");
  }
  Matrix r(n - 1, d);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index j = 0; j < d; ++j) {
      r(t - 1, j) = kind == ReturnKind::log ? std::log(prices(t, j) / prices(t - 1, j))
                                            : prices(t, j) / prices(t - 1, j) - 1.0;
    }
  }

  std::vector<bool> keep(static_cast<std::size_t>(n - 1), true);
  for (Eigen::Index t = 0; t < n - 1;) {
    if (!(r.row(t).array() == 0.0).all()) {
      ++t;
      continue;
    }
    Eigen::Index end = t;
    while (end < n - 1 && (r.row(end).array() == 0.0).all()) ++end;
    if (end - t >= stale_gap) {
      for (Eigen::Index k = t; k < end; ++k) keep[static_cast<std::size_t>(k)] = false;
    }
    t = end;
  }
  Returns out;
  out.series.resize(std::count(keep.begin(), keep.end(), true), d);
  Eigen::Index row = 0;
  for (Eigen::Index t = 0; t < n - 1; ++t) {
    if (keep[static_cast<std::size_t>(t)]) {
      out.series.row(row++) = r.row(t);
    } else {
      ++out.stale_rows;
    }
  }
  return out;
}

Dataset standardize(const ReturnSeries& series, std::string name, std::string source_path) {
  if (series.rows() < 2) fail(ErrorKind::TooFewObservations, "standardize needs two rows");
  Dataset ds;
  ds.name = std::move(name);
  ds.source_path = std::move(source_path);
  ds.standardized = true;
  ds.series = series;
  const double n = static_cast<double>(series.rows());
  for (Eigen::Index j = 0; j < series.cols(); ++j) {
    const double mean = series.col(j).mean();
    const double sd = std::sqrt((series.col(j).array() - mean).square().sum() / n);
    if (!(sd > 0.0) || !std::isfinite(sd)) {
      fail(ErrorKind::ZeroVarianceColumn, "column " + std::to_string(j) + " has zero variance");
    }
    ds.series.col(j) = (series.col(j).array() - mean) / sd;
  }
  return ds;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& text) {
  const std::string s = trim(text);
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorKind::ParseError, "not a number: '" + s + "'");
  }
  return v;
}

void write_series_csv(std::ostream& out, const ReturnSeries& series,
                      const std::vector<std::string>& columns) {
  out << "index";
  for (Eigen::Index j = 0; j < series.cols(); ++j) {
    out << ',';
    if (static_cast<std::size_t>(j) < columns.size()) {
      out << columns[static_cast<std::size_t>(j)];
    } else {
      out << 'x' << j + 1;
    }
  }
  out << '\n';
  for (Eigen::Index t = 0; t < series.rows(); ++t) {
    out << t;
    for (Eigen::Index j = 0; j < series.cols(); ++j) out << ',' << format_double(series(t, j));
    out << '\n';
  }
}

void write_records_csv(std::ostream& out, std::string_view method,
                       const std::vector<PredictionRecord>& records, bool timing) {
  const Eigen::Index d = records.empty() ? 0 : records.front().predicted_cov_mean.rows();
  out << "step,method,pred_loglik_mixture,pred_loglik_plugin,ess,elapsed_seconds";
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) out << ",sigma_" << i + 1 << '_' << j + 1;
  out << '\n';
  for (const auto& r : records) {
    out << r.step << ',' << method << ',' << format_double(r.pred_logdensity_mixture) << ','
        << format_double(r.pred_logdensity_plugin) << ',' << format_double(r.ess) << ','
        << format_double(timing ? r.elapsed_seconds : 0.0);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i; j < d; ++j) out << ',' << format_double(r.predicted_cov_mean(i, j));
    out << '\n';
  }
}

void write_score_table(std::ostream& out, const ScoreTable& tbl) {
  tbl.validate();
  out << "dataset";
  for (const auto& m : tbl.methods) out << ',' << m;
  out << '\n';
  for (std::size_t j = 0; j < tbl.datasets.size(); ++j) {
    out << tbl.datasets[j];
    for (Eigen::Index i = 0; i < tbl.scores.rows(); ++i) {
      out << ',' << format_double(tbl.scores(i, static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

ScoreTable read_score_table(std::istream& in) {
  const RawTable raw = parse_csv(in);
  if (raw.timestamps.empty()) {
    fail(ErrorKind::HeaderMismatch, "score table needs a leading dataset column");
  }
  if (raw.dropped_rows > 0) {
    fail(ErrorKind::ParseError, std::to_string(raw.dropped_rows) + " score rows are not numeric");
  }
  ScoreTable tbl;
  tbl.methods = raw.columns;
  tbl.datasets = raw.timestamps;
  tbl.scores = raw.values.transpose();
  tbl.validate();
  return tbl;
}

}  // namespace dyncov
