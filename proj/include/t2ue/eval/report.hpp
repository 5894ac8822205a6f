#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace t2ue {

/// Canonical JSON text: keys sorted (the map container guarantees it),
/// non-integer numbers printed with 6 significant digits, stable indentation.
/// Re-emitting equal data yields identical bytes.
std::string dump_canonical(const nlohmann::json& j, int indent = 2);

/// report.json writer (schema_version stamped at the top level).
void write_report_json(const std::string& path, const nlohmann::json& body);

/// Rows of label -> value columns; the column set is the union over rows,
/// emitted in first-appearance order.
void write_tables_csv(const std::string& path, const std::vector<nlohmann::json>& rows);

/// epoch, train_loss, test_metric learning-curve CSV.
struct CurvePoint {
    int epoch;
    double train_loss;
    double test_metric;
};
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

/// Minimal SVG line chart; one polyline per named series.
struct SvgSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};
void write_svg_lines(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<SvgSeries>& series);

}  // namespace t2ue
