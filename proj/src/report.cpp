#include "attnlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "attnlab/errors.hpp"
#include "attnlab/io.hpp"

namespace attnlab {

using nlohmann::json;

bool ReportRow::has_field(const std::string& name) const {
    for (const auto& [key, value] : fields)
        if (key == name) return true;
    return false;
}

double ReportRow::field(const std::string& name) const {
    for (const auto& [key, value] : fields)
        if (key == name) return value;
    throw InvalidInput("report row '" + label + "' has no field '" + name + "'");
}

std::string format_double(double value) { return json(value).dump(); }

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
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

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_text(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void require_same_fields(const std::vector<ReportRow>& rows) {
    for (size_t i = 1; i < rows.size(); ++i) {
        bool same = rows[i].fields.size() == rows[0].fields.size();
        for (size_t k = 0; same && k < rows[0].fields.size(); ++k)
            same = rows[i].fields[k].first == rows[0].fields[k].first;
        if (!same)
            throw InvalidInput("report rows disagree on fields ('" + rows[0].label + "' vs '" +
                               rows[i].label + "')");
    }
}

}  // namespace

std::string to_csv(const std::vector<ReportRow>& rows) {
    if (rows.empty()) throw InvalidInput("to_csv: no rows");
    require_same_fields(rows);
    std::string out = "label";
    for (const auto& [key, value] : rows[0].fields) out += "," + csv_escape(key);
    out += '\n';
    for (const ReportRow& row : rows) {
        out += csv_escape(row.label);
        for (const auto& [key, value] : row.fields) out += "," + format_double(value);
        out += '\n';
    }
    return out;
}

std::string rows_to_json(const std::vector<ReportRow>& rows) {
    json arr = json::array();
    for (const ReportRow& row : rows) {
        json fields = json::array();
        for (const auto& [key, value] : row.fields) fields.push_back({{key, value}});
        arr.push_back({{"label", row.label}, {"fields", std::move(fields)}});
    }
    return arr.dump(2) + "\n";
}

std::vector<ReportRow> rows_from_json(const std::string& text) {
    json arr = json::parse(text, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) throw InvalidInput("rows_from_json: not a JSON array");
    std::vector<ReportRow> rows;
    try {
        for (const json& item : arr) {
            ReportRow row;
            row.label = item.at("label").get<std::string>();
            for (const json& entry : item.at("fields")) {
                if (!entry.is_object() || entry.size() != 1)
                    throw InvalidInput("rows_from_json: malformed field entry");
                for (const auto& [key, value] : entry.items())
                    row.fields.emplace_back(key, value.get<double>());
            }
            rows.push_back(std::move(row));
        }
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("rows_from_json: ") + e.what());
    }
    return rows;
}

namespace {

struct AxisRange {
    double lo = 0.0, hi = 1.0;

    double place(double v, double pix_lo, double pix_hi) const {
        return pix_lo + (v - lo) / (hi - lo) * (pix_hi - pix_lo);
    }
};

AxisRange padded_range(const std::vector<double>& values) {
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (hi - lo < 1e-12) return {lo - 0.5, lo + 0.5};
    double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

}  // namespace

std::string render_svg_scatter(const std::vector<ReportRow>& rows, const std::string& x_field,
                               const std::string& y_field) {
    if (rows.empty()) throw InvalidInput("render_svg_scatter: no rows");
    std::vector<double> xs, ys;
    for (const ReportRow& row : rows) {
        xs.push_back(row.field(x_field));
        ys.push_back(row.field(y_field));
        if (!std::isfinite(xs.back()) || !std::isfinite(ys.back()))
            throw InvalidInput("render_svg_scatter: non-finite value in row '" + row.label + "'");
    }
    AxisRange xr = padded_range(xs);
    AxisRange yr = padded_range(ys);

    const double w = 640, h = 480;
    const double left = 70, right = w - 20, top = 20, bottom = h - 50;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" "
           "height=\"480\" viewBox=\"0 0 640 480\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
    svg += "<line x1=\"" + fixed2(left) + "\" y1=\"" + fixed2(bottom) + "\" x2=\"" +
           fixed2(right) + "\" y2=\"" + fixed2(bottom) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fixed2(left) + "\" y1=\"" + fixed2(top) + "\" x2=\"" + fixed2(left) +
           "\" y2=\"" + fixed2(bottom) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        double f = i / 4.0;
        double xv = xr.lo + f * (xr.hi - xr.lo);
        double yv = yr.lo + f * (yr.hi - yr.lo);
        double xp = xr.place(xv, left, right);
        double yp = yr.place(yv, bottom, top);
        svg += "<line x1=\"" + fixed2(xp) + "\" y1=\"" + fixed2(bottom) + "\" x2=\"" + fixed2(xp) +
               "\" y2=\"" + fixed2(bottom + 5) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fixed2(xp) + "\" y=\"" + fixed2(bottom + 18) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
               xml_escape(tick_text(xv)) + "</text>\n";
        svg += "<line x1=\"" + fixed2(left - 5) + "\" y1=\"" + fixed2(yp) + "\" x2=\"" +
               fixed2(left) + "\" y2=\"" + fixed2(yp) +
               "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fixed2(left - 8) + "\" y=\"" + fixed2(yp + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
               xml_escape(tick_text(yv)) + "</text>\n";
    }

    svg += "<text x=\"" + fixed2((left + right) / 2) + "\" y=\"" + fixed2(h - 12) +
           "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" +
           xml_escape(x_field) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + fixed2((top + bottom) / 2) +
           "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           fixed2((top + bottom) / 2) + ")\">" + xml_escape(y_field) + "</text>\n";

    for (size_t i = 0; i < rows.size(); ++i) {
        double xp = xr.place(xs[i], left, right);
        double yp = yr.place(ys[i], bottom, top);
        svg += "<circle cx=\"" + fixed2(xp) + "\" cy=\"" + fixed2(yp) +
               "\" r=\"4\" fill=\"#336699\"/>\n";
        svg += "<text x=\"" + fixed2(xp + 7) + "\" y=\"" + fixed2(yp - 6) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(rows[i].label) +
               "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

void emit_svg_scatter(const std::vector<ReportRow>& rows, const std::string& x_field,
                      const std::string& y_field, const std::string& path) {
    write_text_file(path, render_svg_scatter(rows, x_field, y_field));
}

}  // namespace attnlab
