#pragma once

#include <string>
#include <vector>

#include "ensot/measures.hpp"

namespace ensot {

/// Shortest decimal string that parses back to the same double.
std::string format_double(double x);

/// Numeric CSV: one header line of column names, then rows of numbers.
struct CsvTable {
  std::vector<std::string> header;
  Matrix rows;  // rows x header.size()
};

std::string to_csv(const CsvTable& table);
/// kConfig on malformed input (ragged rows, non-numeric cells, missing header).
CsvTable parse_csv(const std::string& text);

CsvTable read_csv_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// Measure schema: x_1..x_n, weight.
CsvTable measure_table(const DiscreteMeasure& mu);
/// Weights are normalized (kZeroMass if they sum to zero).
DiscreteMeasure measure_from_table(const CsvTable& table);

/// Matrix schema: c_1..c_cols.
CsvTable matrix_table(const Matrix& m);

/// Time series schema: t, v_1..v_n, S_11, S_12, ..., S_nn (row-major).
CsvTable time_series_table(const std::vector<double>& times, const std::vector<Vector>& means,
                           const std::vector<Matrix>& covariances);

/// Plan schema: i, j, mass (entries above `threshold`).
CsvTable plan_table(const Matrix& plan, double threshold = 0.0);

/// Step CDF schema: t, mass.
CsvTable cdf_table(const std::vector<double>& times, const std::vector<double>& mass);

/// One panel per state coordinate: mean line with a mean +/- 2 sigma band.
std::string ribbon_svg(const std::vector<double>& times, const std::vector<Vector>& means,
                       const std::vector<Matrix>& covariances,
                       const std::vector<double>& marks = {});

}  // namespace ensot
