#pragma once

#include <string>
#include <utility>
#include <vector>

namespace attnlab {

// One labeled result row. Field order is preserved; every row of a report
// must carry the same fields in the same order.
struct ReportRow {
    std::string label;
    std::vector<std::pair<std::string, double>> fields;

    bool has_field(const std::string& name) const;
    double field(const std::string& name) const;  // InvalidInput when absent
};

// Shortest decimal text that parses back to exactly the same double. The
// same encoder backs the JSON reports, so CSV and JSON never disagree.
std::string format_double(double value);

// Header row ("label,<field>,..."), then one line per row, '.' decimal,
// no trailing newline padding beyond the final line terminator. Labels are
// RFC-4180-quoted when they contain a comma, quote, or newline. Rows with
// mismatched field sets are rejected with InvalidInput.
std::string to_csv(const std::vector<ReportRow>& rows);

// Lossless JSON array of {label, fields} objects; field order preserved.
std::string rows_to_json(const std::vector<ReportRow>& rows);
std::vector<ReportRow> rows_from_json(const std::string& text);

// Static SVG 1.1 scatter plot, one labeled marker per row. Byte-identical
// output for identical input. Degenerate extents widen to a unit range.
// Missing fields throw InvalidInput.
std::string render_svg_scatter(const std::vector<ReportRow>& rows, const std::string& x_field,
                               const std::string& y_field);
void emit_svg_scatter(const std::vector<ReportRow>& rows, const std::string& x_field,
                      const std::string& y_field, const std::string& path);

}  // namespace attnlab
