#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "doprec/errors.hpp"
#include "doprec/training.hpp"

namespace doprec {

namespace fs = std::filesystem;

namespace {

std::string stem_of(const std::string& path) {
    fs::path p(path);
    return (p.parent_path() / p.stem()).string();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << std::setprecision(17);
    return out;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

double to_double(const std::string& s, const std::string& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw IoError("bad number '" + s + "' in " + path);
    }
}

}  // namespace

void export_report(const ErrorReport& report, const std::string& path, int bins) {
    if (report.errors.size() != report.errors_mean_removed.size()) throw ShapeMismatch("report error vectors differ in length");
    const std::string stem = stem_of(path);
    {
        auto out = open_out(stem + ".csv");
        out << "record,error,error_mean_removed\n";
        for (std::size_t j = 0; j < report.errors.size(); ++j) {
            out << j << ',' << report.errors[j] << ',' << report.errors_mean_removed[j] << '\n';
        }
        if (!out) throw IoError("write failed for " + stem + ".csv");
    }
    {
        auto out = open_out(stem + "_summary.csv");
        out << "statistic,with_mean,mean_removed\n";
        out << "mean," << report.with_mean.mean << ',' << report.mean_removed.mean << '\n';
        out << "p25," << report.with_mean.p25 << ',' << report.mean_removed.p25 << '\n';
        out << "p50," << report.with_mean.p50 << ',' << report.mean_removed.p50 << '\n';
        out << "p75," << report.with_mean.p75 << ',' << report.mean_removed.p75 << '\n';
        out << "C0," << report.C0 << ',' << report.C0 << '\n';
        out << "primary," << (report.mean_removed_primary ? 0 : 1) << ',' << (report.mean_removed_primary ? 1 : 0) << '\n';
        if (!out) throw IoError("write failed for " + stem + "_summary.csv");
    }
    if (fs::path(path).extension() == ".svg") {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open " + path + " for writing");
        const char* title = report.mean_removed_primary ? "error distribution, means removed" : "error distribution";
        out << histogram_svg(histogram(report.primary_errors(), bins), title);
        if (!out) throw IoError("write failed for " + path);
    }
}

ErrorReport import_report(const std::string& path) {
    const std::string stem = stem_of(path);
    ErrorReport r;
    {
        std::ifstream in(stem + ".csv");
        if (!in) throw IoError("cannot open " + stem + ".csv");
        std::string line;
        std::getline(in, line);
        if (line != "record,error,error_mean_removed") throw IoError("unexpected header in " + stem + ".csv");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto cells = split(line);
            if (cells.size() != 3) throw IoError("malformed row in " + stem + ".csv");
            r.errors.push_back(to_double(cells[1], path));
            r.errors_mean_removed.push_back(to_double(cells[2], path));
        }
    }
    std::ifstream in(stem + "_summary.csv");
    if (!in) throw IoError("cannot open " + stem + "_summary.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto cells = split(line);
        if (cells.size() != 3) continue;
        const double a = to_double(cells[1], path), b = to_double(cells[2], path);
        if (cells[0] == "C0") r.C0 = a;
        else if (cells[0] == "primary") r.mean_removed_primary = b > 0.5;
    }
    // Summaries are recomputed from the per-record values.
    r.with_mean = summarize(r.errors);
    r.mean_removed = summarize(r.errors_mean_removed);
    return r;
}

Histogram histogram(const std::vector<double>& values, int bins) {
    if (bins < 1) throw InvalidConfig("histogram needs at least one bin");
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    if (values.empty()) return h;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    h.lo = *lo;
    h.hi = *hi;
    const double width = (h.hi - h.lo) / bins;
    for (double v : values) {
        std::size_t b = width > 0 ? static_cast<std::size_t>((v - h.lo) / width) : 0;
        h.counts[std::min(b, h.counts.size() - 1)]++;
    }
    return h;
}

std::string histogram_svg(const Histogram& h, const std::string& title) {
    constexpr double W = 480, H = 300, left = 50, right = 20, top = 30, bottom = 40;
    const double pw = W - left - right, ph = H - top - bottom;
    const std::size_t peak = h.counts.empty() ? 0 : *std::max_element(h.counts.begin(), h.counts.end());
    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
    const double bw = h.counts.empty() ? 0 : pw / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        const double bh = peak ? ph * static_cast<double>(h.counts[b]) / static_cast<double>(peak) : 0;
        os << "<rect x=\"" << left + bw * static_cast<double>(b) << "\" y=\"" << top + ph - bh << "\" width=\""
           << bw * 0.95 << "\" height=\"" << bh << "\" fill=\"steelblue\"/>\n";
    }
    os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left << "\" y=\"" << H - 12 << "\" font-size=\"11\">" << h.lo << "</text>\n";
    os << "<text x=\"" << left + pw << "\" y=\"" << H - 12 << "\" font-size=\"11\" text-anchor=\"end\">" << h.hi
       << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" font-size=\"11\" text-anchor=\"end\">" << peak
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace doprec
