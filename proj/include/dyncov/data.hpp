#pragma once

// CSV ingestion, return construction, standardization and the text formats
// shared by the command-line tool.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "dyncov/eval.hpp"
#include "dyncov/models.hpp"

namespace dyncov {

struct RawTable {
  std::vector<std::string> columns;     // numeric column names
  std::vector<std::string> timestamps;  // empty when the file has none
  Matrix values;                        // rows x columns
  std::size_t dropped_rows = 0;         // rows with an unparsable cell
};

// Header row first. The first column is taken as a timestamp when its name
// is one of date/time/timestamp/datetime/index/step/t, or when the first
// data cell is not a number.
RawTable load_csv(const std::string& path);
RawTable parse_csv(std::istream& in);

enum class ReturnKind { log, simple };

struct Returns {
  ReturnSeries series;
  std::size_t stale_rows = 0;  // all-zero rows removed as stale-price gaps
};

// Runs of at least `stale_gap` consecutive all-zero return rows are removed.
Returns to_returns(const Matrix& prices, ReturnKind kind = ReturnKind::log, int stale_gap = 5);

struct Dataset {
  std::string name;
  ReturnSeries series;
  std::string source_path;
  bool standardized = false;
};

// Column-wise (x - mean) / std with the population standard deviation.
Dataset standardize(const ReturnSeries& series, std::string name = {},
                    std::string source_path = {});

// 17 significant digits, so parsing the text gives back the same double.
std::string format_double(double v);
double parse_double(const std::string& text);

void write_series_csv(std::ostream& out, const ReturnSeries& series,
                      const std::vector<std::string>& columns = {});

// step, method, pred_loglik_mixture, pred_loglik_plugin, ess,
// elapsed_seconds, then sigma_i_j for the upper triangle. Elapsed time is
// written as 0 unless `timing` is set, which keeps files reproducible.
void write_records_csv(std::ostream& out, std::string_view method,
                       const std::vector<PredictionRecord>& records, bool timing);

// One row per dataset, one column per method:
//   dataset,BEKK,BMDC
//   eurusd,-1.41,-1.37
void write_score_table(std::ostream& out, const ScoreTable& tbl);
ScoreTable read_score_table(std::istream& in);

}  // namespace dyncov
