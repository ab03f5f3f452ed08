#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace csnet {

// One parsed top-k CSV (header k,mean_error,stderr,n).
struct TopkCurve {
    std::string label;
    std::vector<std::size_t> k;
    std::vector<double> mean_error;
    std::vector<double> stderr_error;
    std::size_t n = 0;
};

// Throws FormatError naming the source and line on malformed input.
TopkCurve parse_topk_csv(std::istream& in, const std::string& label, const std::string& what);
TopkCurve read_topk_csv(const std::filesystem::path& path);

struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;
};

// Ranges covering every plotted point; degenerate spans are widened.
AxisRange k_range(const std::vector<TopkCurve>& curves);
AxisRange error_range(const std::vector<TopkCurve>& curves);

// Top-k error vs k, one polyline per curve, hand-written SVG.
std::string render_svg(const std::vector<TopkCurve>& curves);
// One row per curve with top-1, top-4 (when present) and top-k_max.
std::string markdown_table(const std::vector<TopkCurve>& curves);

}  // namespace csnet
