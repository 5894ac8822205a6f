#include "t2ue/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace t2ue {

namespace {

std::string format_number(const nlohmann::json& j) {
    if (j.is_number_integer()) return std::to_string(j.get<int64_t>());
    if (j.is_number_unsigned()) return std::to_string(j.get<uint64_t>());
    double v = j.get<double>();
    if (!std::isfinite(v)) throw std::invalid_argument("report: non-finite number");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void dump_rec(const nlohmann::json& j, std::string& out, int indent, int depth) {
    const std::string pad(static_cast<size_t>(indent) * depth, ' ');
    const std::string pad_in(static_cast<size_t>(indent) * (depth + 1), ' ');
    switch (j.type()) {
        case nlohmann::json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            size_t i = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++i) {
                out += pad_in + nlohmann::json(it.key()).dump() + ": ";
                dump_rec(it.value(), out, indent, depth + 1);
                if (i + 1 < j.size()) out += ",";
                out += "\n";
            }
            out += pad + "}";
            return;
        }
        case nlohmann::json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += "[\n";
            for (size_t i = 0; i < j.size(); ++i) {
                out += pad_in;
                dump_rec(j[i], out, indent, depth + 1);
                if (i + 1 < j.size()) out += ",";
                out += "\n";
            }
            out += pad + "]";
            return;
        }
        case nlohmann::json::value_t::number_integer:
        case nlohmann::json::value_t::number_unsigned:
        case nlohmann::json::value_t::number_float: out += format_number(j); return;
        default: out += j.dump(); return;
    }
}

}  // namespace

std::string dump_canonical(const nlohmann::json& j, int indent) {
    std::string out;
    dump_rec(j, out, indent, 0);
    out += "\n";
    return out;
}

void write_report_json(const std::string& path, const nlohmann::json& body) {
    if (body.empty()) throw std::invalid_argument("report: empty results");
    nlohmann::json j = body;
    j["schema_version"] = 1;
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw std::runtime_error("report: cannot write " + path);
    os << dump_canonical(j);
    if (!os) throw std::runtime_error("report: write failed " + path);
}

void write_tables_csv(const std::string& path, const std::vector<nlohmann::json>& rows) {
    std::vector<std::string> cols;
    for (const auto& r : rows)
        for (auto it = r.begin(); it != r.end(); ++it)
            if (std::find(cols.begin(), cols.end(), it.key()) == cols.end()) cols.push_back(it.key());
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot write " + path);
    for (size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
    os << "\n";
    for (const auto& r : rows) {
        for (size_t c = 0; c < cols.size(); ++c) {
            os << (c ? "," : "");
            if (r.contains(cols[c])) {
                const auto& v = r.at(cols[c]);
                if (v.is_string()) os << v.get<std::string>();
                else if (v.is_number()) os << format_number(v);
                else os << v.dump();
            }
        }
        os << "\n";
    }
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot write " + path);
    os << "epoch,train_loss,test_metric\n";
    char buf[96];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g\n", p.epoch, p.train_loss, p.test_metric);
        os << buf;
    }
}

void write_svg_lines(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<SvgSeries>& series) {
    const int W = 760, H = 480, ml = 70, mr = 160, mt = 50, mb = 55;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmax >= xmin)) {
        xmin = 0;
        xmax = 1;
    }
    if (!(ymax >= ymin)) {
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto sy = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot write " + path);
    char buf[256];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
    // axes
    std::snprintf(buf, sizeof(buf), "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml,
                  H - mb, W - mr, H - mb);
    os << buf;
    std::snprintf(buf, sizeof(buf), "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, mt,
                  ml, H - mb);
    os << buf;
    for (int t = 0; t <= 4; ++t) {
        double xv = xmin + (xmax - xmin) * t / 4.0;
        double yv = ymin + (ymax - ymin) * t / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\" font-size=\"11\">%.4g</text>\n", sx(xv),
                      H - mb + 18, xv);
        os << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\" font-size=\"11\">%.4g</text>\n", ml - 6,
                      sy(yv) + 4, yv);
        os << buf;
    }
    os << "<text x=\"" << (ml + (W - ml - mr) / 2) << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
    os << "<text x=\"18\" y=\"" << (mt + (H - mt - mb) / 2)
       << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
       << (mt + (H - mt - mb) / 2) << ")\">" << y_label << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % 7];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < series[s].x.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", sx(series[s].x[i]), sy(series[s].y[i]));
            os << buf;
        }
        os << "\"/>\n";
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" font-size=\"12\" fill=\"%s\">%s</text>\n", W - mr + 10,
                      mt + 18 * static_cast<int>(s) + 10, color, series[s].name.c_str());
        os << buf;
    }
    os << "</svg>\n";
}

}  // namespace t2ue
