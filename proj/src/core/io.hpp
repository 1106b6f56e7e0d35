#pragma once

#include <string>
#include <vector>

namespace stn {

// Dense row-major matrix for plain numeric data outside the autodiff graph.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

// Shortest decimal that round-trips the exact double (%.17g).
std::string format_double17(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
void ensure_dir(const std::string& path);

// CSV, no header unless given; values formatted with %.17g.
void write_csv_matrix(const std::string& path, const Mat& m, const std::string& header = "");
Mat read_csv_matrix(const std::string& path, bool skip_header = false);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

// 8-bit ASCII PGM (P2), values min-max scaled per image; constant input maps to 0.
void write_pgm(const std::string& path, const Mat& m);

}  // namespace stn
