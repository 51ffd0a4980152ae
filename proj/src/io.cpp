#include "ensot/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ensot {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_number(const std::string& cell, int line) {
  double x = 0.0;
  const char* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, x);
  if (ec != std::errc() || ptr != end || cell.empty()) {
    fail(ErrorKind::kConfig, "CSV line " + std::to_string(line) + ": '" + cell +
                                 "' is not a number");
  }
  return x;
}

std::string fmt(double x) { return format_double(x); }

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::string to_csv(const CsvTable& table) {
  require(table.rows.cols() == static_cast<Eigen::Index>(table.header.size()) ||
              table.rows.rows() == 0,
          ErrorKind::kDimensionMismatch, "CSV header and row width differ");
  std::string out;
  for (size_t k = 0; k < table.header.size(); ++k) {
    if (k) out += ',';
    out += table.header[k];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < table.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.rows.cols(); ++c) {
      if (c) out += ',';
      out += format_double(table.rows(r, c));
    }
    out += '\n';
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  CsvTable table;
  std::vector<std::vector<double>> rows;
  int number = 0;
  bool have_header = false;
  while (std::getline(ss, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (!have_header) {
      table.header = cells;
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      fail(ErrorKind::kConfig, "CSV line " + std::to_string(number) + " has " +
                                   std::to_string(cells.size()) + " cells, expected " +
                                   std::to_string(table.header.size()));
    }
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_number(c, number));
    rows.push_back(std::move(row));
  }
  require(have_header, ErrorKind::kConfig, "CSV has no header line");
  table.rows.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(table.header.size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) table.rows(r, c) = rows[r][c];
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kConfig, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kConfig, "cannot write " + path);
  out << text;
  require(static_cast<bool>(out), ErrorKind::kConfig, "failed writing " + path);
}

CsvTable measure_table(const DiscreteMeasure& mu) {
  CsvTable t;
  for (int a = 0; a < mu.dim(); ++a) t.header.push_back("x_" + std::to_string(a + 1));
  t.header.push_back("weight");
  t.rows.resize(mu.size(), mu.dim() + 1);
  t.rows.leftCols(mu.dim()) = mu.atoms().transpose();
  t.rows.col(mu.dim()) = mu.weights();
  return t;
}

DiscreteMeasure measure_from_table(const CsvTable& table) {
  const auto cols = static_cast<Eigen::Index>(table.header.size());
  require(cols >= 2 && table.header.back() == "weight", ErrorKind::kConfig,
          "measure CSV needs columns x_1..x_n, weight");
  for (Eigen::Index a = 0; a + 1 < cols; ++a)
    require(table.header[a] == "x_" + std::to_string(a + 1), ErrorKind::kConfig,
            "measure CSV column " + std::to_string(a + 1) + " must be x_" +
                std::to_string(a + 1));
  require(table.rows.rows() > 0, ErrorKind::kConfig, "measure CSV has no atoms");
  return DiscreteMeasure::from_unnormalized(table.rows.leftCols(cols - 1).transpose(),
                                            table.rows.col(cols - 1));
}

CsvTable matrix_table(const Matrix& m) {
  CsvTable t;
  for (Eigen::Index c = 0; c < m.cols(); ++c) t.header.push_back("c_" + std::to_string(c + 1));
  t.rows = m;
  return t;
}

CsvTable time_series_table(const std::vector<double>& times, const std::vector<Vector>& means,
                           const std::vector<Matrix>& covariances) {
  require(times.size() == means.size() && times.size() == covariances.size() && !times.empty(),
          ErrorKind::kDimensionMismatch, "time series lengths differ");
  const auto n = means[0].size();
  CsvTable t;
  t.header.push_back("t");
  for (Eigen::Index a = 0; a < n; ++a) t.header.push_back("v_" + std::to_string(a + 1));
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      t.header.push_back("S_" + std::to_string(a + 1) + std::to_string(b + 1));
  t.rows.resize(static_cast<Eigen::Index>(times.size()), 1 + n + n * n);
  for (size_t r = 0; r < times.size(); ++r) {
    t.rows(r, 0) = times[r];
    t.rows.block(r, 1, 1, n) = means[r].transpose();
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) t.rows(r, 1 + n + a * n + b) = covariances[r](a, b);
  }
  return t;
}

CsvTable plan_table(const Matrix& plan, double threshold) {
  CsvTable t;
  t.header = {"i", "j", "mass"};
  std::vector<Eigen::Vector3d> entries;
  for (Eigen::Index i = 0; i < plan.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.cols(); ++j)
      if (plan(i, j) > threshold) entries.emplace_back(i, j, plan(i, j));
  t.rows.resize(static_cast<Eigen::Index>(entries.size()), 3);
  for (size_t r = 0; r < entries.size(); ++r) t.rows.row(r) = entries[r].transpose();
  return t;
}

CsvTable cdf_table(const std::vector<double>& times, const std::vector<double>& mass) {
  require(times.size() == mass.size(), ErrorKind::kDimensionMismatch, "CDF lengths differ");
  CsvTable t;
  t.header = {"t", "mass"};
  t.rows.resize(static_cast<Eigen::Index>(times.size()), 2);
  for (size_t r = 0; r < times.size(); ++r) t.rows.row(r) << times[r], mass[r];
  return t;
}

std::string ribbon_svg(const std::vector<double>& times, const std::vector<Vector>& means,
                       const std::vector<Matrix>& covariances, const std::vector<double>& marks) {
  require(!times.empty() && times.size() == means.size() && times.size() == covariances.size(),
          ErrorKind::kDimensionMismatch, "ribbon series lengths differ");
  const auto n = means[0].size();
  const double width = 640, panel = 220, margin = 40;
  const double height = n * panel;
  const double t0 = times.front(), t1 = std::max(times.back(), t0 + 1e-12);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
      << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index a = 0; a < n; ++a) {
    std::vector<double> lo, hi, mid;
    for (size_t k = 0; k < times.size(); ++k) {
      const double s = 2.0 * std::sqrt(std::max(0.0, covariances[k](a, a)));
      mid.push_back(means[k](a));
      lo.push_back(means[k](a) - s);
      hi.push_back(means[k](a) + s);
    }
    double ymin = *std::min_element(lo.begin(), lo.end());
    double ymax = *std::max_element(hi.begin(), hi.end());
    if (ymax - ymin < 1e-12) {
      ymin -= 1.0;
      ymax += 1.0;
    }
    const double top = a * panel + margin / 2, bottom = (a + 1) * panel - margin / 2;
    auto px = [&](double t) { return margin + (width - 2 * margin) * (t - t0) / (t1 - t0); };
    auto py = [&](double y) { return bottom - (bottom - top) * (y - ymin) / (ymax - ymin); };
    svg << "<g>\n<rect x=\"" << fmt(margin) << "\" y=\"" << fmt(top) << "\" width=\""
        << fmt(width - 2 * margin) << "\" height=\"" << fmt(bottom - top)
        << "\" fill=\"none\" stroke=\"#888\"/>\n";
    svg << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\" points=\"";
    for (size_t k = 0; k < times.size(); ++k)
      svg << fmt(px(times[k])) << ',' << fmt(py(hi[k])) << ' ';
    for (size_t k = times.size(); k-- > 0;)
      svg << fmt(px(times[k])) << ',' << fmt(py(lo[k])) << ' ';
    svg << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\" points=\"";
    for (size_t k = 0; k < times.size(); ++k)
      svg << fmt(px(times[k])) << ',' << fmt(py(mid[k])) << ' ';
    svg << "\"/>\n";
    for (double t : marks) {
      svg << "<line x1=\"" << fmt(px(t)) << "\" x2=\"" << fmt(px(t)) << "\" y1=\"" << fmt(top)
          << "\" y2=\"" << fmt(bottom) << "\" stroke=\"#bbb\" stroke-dasharray=\"3,3\"/>\n";
    }
    svg << "<text x=\"4\" y=\"" << fmt(top + 12) << "\" font-size=\"12\">x" << (a + 1)
        << "</text>\n";
    svg << "<text x=\"" << fmt(margin) << "\" y=\"" << fmt(bottom + 14)
        << "\" font-size=\"10\">" << fmt(t0) << "</text>\n";
    svg << "<text x=\"" << fmt(width - margin - 20) << "\" y=\"" << fmt(bottom + 14)
        << "\" font-size=\"10\">" << fmt(t1) << "</text>\n";
    svg << "<text x=\"2\" y=\"" << fmt(top + 26) << "\" font-size=\"10\">" << fmt(ymax)
        << "</text>\n<text x=\"2\" y=\"" << fmt(bottom) << "\" font-size=\"10\">" << fmt(ymin)
        << "</text>\n</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ensot
