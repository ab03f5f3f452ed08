#include "csnet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include "csnet/tensor.hpp"

namespace csnet {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream s(line);
    while (std::getline(s, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

TopkCurve parse_topk_csv(std::istream& in, const std::string& label, const std::string& what) {
    TopkCurve c;
    c.label = label;
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw FormatError(what + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (!std::getline(in, line)) {
        lineno = 1;
        fail("empty file");
    }
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "k,mean_error,stderr,n") fail("expected header 'k,mean_error,stderr,n'");
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 4) fail("expected 4 fields, got " + std::to_string(f.size()));
        std::size_t k = 0, n = 0;
        double m = 0.0, se = 0.0;
        try {
            std::size_t p0 = 0, p1 = 0, p2 = 0, p3 = 0;
            k = std::stoul(f[0], &p0);
            m = std::stod(f[1], &p1);
            se = std::stod(f[2], &p2);
            n = std::stoul(f[3], &p3);
            if (p0 != f[0].size() || p1 != f[1].size() || p2 != f[2].size() || p3 != f[3].size())
                throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            fail("unparseable row '" + line + "'");
        }
        if (k != c.k.size() + 1) fail("expected k = " + std::to_string(c.k.size() + 1));
        if (!std::isfinite(m) || !std::isfinite(se)) fail("non-finite value");
        if (!c.k.empty() && n != c.n) fail("n changes between rows");
        c.k.push_back(k);
        c.mean_error.push_back(m);
        c.stderr_error.push_back(se);
        c.n = n;
    }
    if (c.k.empty()) fail("no data rows");
    return c;
}

TopkCurve read_topk_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path.string() + ": cannot open");
    return parse_topk_csv(in, path.stem().string(), path.string());
}

AxisRange k_range(const std::vector<TopkCurve>& curves) {
    AxisRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& c : curves)
        for (auto k : c.k) {
            r.lo = std::min(r.lo, static_cast<double>(k));
            r.hi = std::max(r.hi, static_cast<double>(k));
        }
    if (!(r.hi > r.lo)) r = {r.lo - 0.5, r.lo + 0.5};
    return r;
}

AxisRange error_range(const std::vector<TopkCurve>& curves) {
    AxisRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& c : curves)
        for (auto v : c.mean_error) {
            r.lo = std::min(r.lo, v);
            r.hi = std::max(r.hi, v);
        }
    if (!(r.hi > r.lo)) {
        const double pad = std::max(std::abs(r.lo) * 0.05, 1e-9);
        r = {r.lo - pad, r.hi + pad};
    }
    return r;
}

std::string render_svg(const std::vector<TopkCurve>& curves) {
    if (curves.empty()) throw UsageError("report: no curves");
    constexpr double W = 640, H = 420, L = 70, R = 170, T = 30, B = 50;
    const auto kr = k_range(curves);
    const auto er = error_range(curves);
    auto px = [&](double k) { return L + (k - kr.lo) / (kr.hi - kr.lo) * (W - L - R); };
    auto py = [&](double e) { return H - B - (e - er.lo) / (er.hi - er.lo) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // Axes with end labels at the data extremes.
    o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << L << "\" y=\"" << H - B + 18 << "\" font-size=\"12\" text-anchor=\"middle\">"
      << fmt("%g", kr.lo) << "</text>\n";
    o << "<text x=\"" << W - R << "\" y=\"" << H - B + 18 << "\" font-size=\"12\" text-anchor=\"middle\">"
      << fmt("%g", kr.hi) << "</text>\n";
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" font-size=\"13\" text-anchor=\"middle\">k</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" font-size=\"12\" text-anchor=\"end\">" << fmt("%.4g", er.lo)
      << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << T + 4 << "\" font-size=\"12\" text-anchor=\"end\">" << fmt("%.4g", er.hi)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"13\" transform=\"rotate(-90 16 " << (T + H - B) / 2
      << ")\" text-anchor=\"middle\">top-k error</text>\n";
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& c = curves[i];
        const char* color = colors[i % 8];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t j = 0; j < c.k.size(); ++j) {
            if (j) o << ' ';
            o << fmt("%.2f", px(static_cast<double>(c.k[j]))) << ',' << fmt("%.2f", py(c.mean_error[j]));
        }
        o << "\"/>\n";
        const double ly = T + 16.0 * static_cast<double>(i) + 8;
        o << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << xml_escape(c.label)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string markdown_table(const std::vector<TopkCurve>& curves) {
    std::ostringstream o;
    o << "| model | n | top-1 | top-4 | top-k_max (k) |\n";
    o << "|---|---:|---:|---:|---:|\n";
    for (const auto& c : curves) {
        o << "| " << c.label << " | " << c.n << " | " << fmt("%.4f", c.mean_error.front()) << " ± "
          << fmt("%.4f", c.stderr_error.front()) << " | ";
        if (c.mean_error.size() >= 4)
            o << fmt("%.4f", c.mean_error[3]) << " ± " << fmt("%.4f", c.stderr_error[3]);
        else
            o << "–";
        o << " | " << fmt("%.4f", c.mean_error.back()) << " (" << c.k.back() << ") |\n";
    }
    return o.str();
}

}  // namespace csnet
