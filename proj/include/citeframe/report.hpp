#pragma once

// Report serialisation: EvalReport JSON, Table-style TSVs, drop tables and
// the per-class radar chart (CSV + SVG).

#include "citeframe/error.hpp"
#include "citeframe/format.hpp"
#include "citeframe/metrics.hpp"
#include "citeframe/schema.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace citeframe {

[[nodiscard]] inline nlohmann::ordered_json to_json(const EvalReport &r) {
    nlohmann::ordered_json j;
    j["schema"] = r.schema;
    j["annotator_id"] = r.annotator_id;
    j["domain_tag"] = std::string{ to_string(r.domain_tag) };
    j["dataset"] = r.dataset;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["total"] = r.total;
    j["excluded"] = r.excluded;
    j["per_class"] = nlohmann::ordered_json::array();
    for (const auto &c : r.per_class) {
        j["per_class"].push_back({ { "label", c.label },
                                   { "precision", c.precision },
                                   { "recall", c.recall },
                                   { "f1", c.f1 },
                                   { "support", c.support } });
    }
    return j;
}

[[nodiscard]] inline EvalReport eval_report_from_json(const nlohmann::ordered_json &j) {
    EvalReport r;
    r.schema = j.at("schema").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.domain_tag = parse_domain_tag(j.at("domain_tag").get<std::string>());
    r.dataset = j.value("dataset", std::string{});
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.total = j.value("total", std::uint64_t{ 0 });
    r.excluded = j.value("excluded", std::size_t{ 0 });
    for (const auto &c : j.at("per_class")) {
        r.per_class.push_back({ c.at("label").get<std::string>(), c.at("precision").get<double>(),
                                c.at("recall").get<double>(), c.at("f1").get<double>(),
                                c.at("support").get<std::uint64_t>() });
    }
    return r;
}

[[nodiscard]] inline EvalReport load_eval_report(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path, 0, "cannot open report");
    }
    try {
        return eval_report_from_json(nlohmann::ordered_json::parse(in));
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(path, 0, std::string{ "malformed report: " } + e.what());
    } catch (const ValidationError &e) {
        throw FormatError(path, 0, e.what());
    }
}

/// Lower-triangular kappa table, 4 decimals. Every annotator gets a row and a
/// column; only cells below the diagonal are filled. "NA" marks pairs with
/// no shared resolved items.
inline void write_agreement_tsv(std::ostream &out, const AgreementMatrix &m) {
    for (const auto &a : m.annotators) {
        out << '\t' << a;
    }
    out << '\n';
    for (std::size_t i = 0; i < m.annotators.size(); ++i) {
        out << m.annotators[i];
        for (std::size_t j = 0; j < m.annotators.size(); ++j) {
            out << '\t';
            if (j < i) {
                const auto &e = m.at(i, j);
                out << (e ? format_fixed(e->kappa, 4) : std::string{ "NA" });
            }
        }
        out << '\n';
    }
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const AgreementMatrix &m) {
    nlohmann::ordered_json j;
    j["annotators"] = m.annotators;
    j["pairs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < m.annotators.size(); ++i) {
        for (std::size_t j2 = 0; j2 < i; ++j2) {
            nlohmann::ordered_json p;
            p["row"] = m.annotators[i];
            p["column"] = m.annotators[j2];
            if (const auto &e = m.at(i, j2)) {
                p["kappa"] = e->kappa;
                p["p_o"] = e->p_o;
                p["p_e"] = e->p_e;
                p["n"] = e->n;
            } else {
                p["kappa"] = nullptr;
                p["n"] = 0;
            }
            j["pairs"].push_back(std::move(p));
        }
    }
    return j;
}

inline constexpr std::string_view eval_summary_header = "framework\tclassifier\tdataset\tdomain_tag\taccuracy\tmacro_f1\tscored\texcluded";
inline constexpr std::string_view per_class_header = "framework\tclassifier\tdataset\tdomain_tag\tclass\tprecision\trecall\tf1\tsupport";

inline void write_eval_summary_tsv(std::ostream &out, const EvalReport &r) {
    out << eval_summary_header << '\n'
        << r.schema << '\t' << r.annotator_id << '\t' << r.dataset << '\t' << to_string(r.domain_tag) << '\t'
        << format_fixed(r.accuracy, 2) << '\t' << format_fixed(r.macro_f1, 2) << '\t' << r.total << '\t' << r.excluded
        << '\n';
}

inline void write_per_class_tsv(std::ostream &out, const EvalReport &r) {
    out << per_class_header << '\n';
    for (const auto &c : r.per_class) {
        out << r.schema << '\t' << r.annotator_id << '\t' << r.dataset << '\t' << to_string(r.domain_tag) << '\t'
            << c.label << '\t' << format_fixed(c.precision, 2) << '\t' << format_fixed(c.recall, 2) << '\t'
            << format_fixed(c.f1, 2) << '\t' << c.support << '\n';
    }
}

/// One (framework, classifier) row of a drop table.
struct DropRow {
    std::string framework;
    std::string classifier;
    std::optional<double> in_f1;
    std::optional<double> cross_f1;
    /// nullopt when the drop is undefined (in-domain F1 of 0)
    std::optional<DropResult> drop;
};

struct DropTable {
    std::vector<DropRow> rows;
    /// framework -> mean drop over its defined (and selected) rows
    std::vector<std::pair<std::string, double>> means;
};

/// Computes drops for paired rows. `mean_prefix`, when non-empty, restricts
/// each framework's mean to classifiers whose name starts with it.
[[nodiscard]] inline DropTable build_drop_table(std::vector<DropRow> rows, const std::string &mean_prefix = {}) {
    DropTable t;
    std::vector<std::string> order;
    std::map<std::string, std::vector<DropResult>> by_framework;
    for (auto &row : rows) {
        if (!row.in_f1 || !row.cross_f1) {
            throw ValidationError("unpaired row: " + row.framework + " / " + row.classifier + " lacks " +
                                  (row.in_f1 ? "a cross-domain" : "an in-domain") + " score");
        }
        if (*row.in_f1 > 0.0) {
            row.drop = cross_domain_drop(*row.in_f1, *row.cross_f1);
        }
        if (by_framework.find(row.framework) == by_framework.end()) {
            order.push_back(row.framework);
            by_framework[row.framework];
        }
        if (row.drop && row.classifier.rfind(mean_prefix, 0) == 0) {
            by_framework[row.framework].push_back(*row.drop);
        }
    }
    for (const auto &f : order) {
        const auto &drops = by_framework[f];
        if (!drops.empty()) {
            t.means.emplace_back(f, aggregate_drops(drops));
        }
    }
    t.rows = std::move(rows);
    return t;
}

inline void write_drop_tsv(std::ostream &out, const DropTable &t) {
    out << "framework\tclassifier\tin_f1\tcross_f1\tdrop_percent\tbucket\n";
    for (const auto &r : t.rows) {
        out << r.framework << '\t' << r.classifier << '\t' << format_fixed(*r.in_f1, 2) << '\t'
            << format_fixed(*r.cross_f1, 2) << '\t';
        if (r.drop) {
            out << r.drop->drop_percent << '\t' << to_string(r.drop->bucket);
        } else {
            out << "undefined\tundefined";
        }
        out << '\n';
    }
    for (const auto &[framework, mean] : t.means) {
        out << framework << "\tmean\t\t\t" << format_fixed(mean, 1) << '\t' << '\n';
    }
}

/// Long-format per-class F1 rows for plotting.
inline void write_radar_csv(std::ostream &out, const std::vector<EvalReport> &reports) {
    out << "framework,model,class,domain_tag,f1\n";
    const auto quote = [](const std::string &s) {
        if (s.find_first_of(",\"\n") == std::string::npos) {
            return s;
        }
        std::string q = "\"";
        for (const char c : s) {
            q += c == '"' ? std::string{ "\"\"" } : std::string(1, c);
        }
        return q + "\"";
    };
    for (const auto &r : reports) {
        for (const auto &c : r.per_class) {
            out << quote(r.schema) << ',' << quote(r.annotator_id) << ',' << quote(c.label) << ','
                << to_string(r.domain_tag) << ',' << format_fixed(c.f1, 4) << '\n';
        }
    }
}

/// A radar panel: one model over one schema, with up to one series per domain tag.
struct RadarPanel {
    std::string model;
    std::string schema;
    std::vector<std::string> axes;
    std::optional<std::vector<double>> in_domain;
    std::optional<std::vector<double>> cross_domain;
};

/// Groups reports into panels by annotator, keeping first-appearance order.
/// Class axes follow `schemas` order. Throws when one panel mixes schemas or
/// repeats a domain tag.
[[nodiscard]] inline std::vector<RadarPanel> build_radar_panels(const std::vector<EvalReport> &reports,
                                                                const SchemaRegistry &schemas) {
    std::vector<RadarPanel> panels;
    for (const auto &r : reports) {
        auto it = std::find_if(panels.begin(), panels.end(), [&](const RadarPanel &p) { return p.model == r.annotator_id; });
        if (it == panels.end()) {
            RadarPanel p;
            p.model = r.annotator_id;
            p.schema = r.schema;
            p.axes = list_labels(schemas.get(r.schema));
            panels.push_back(std::move(p));
            it = std::prev(panels.end());
        } else if (it->schema != r.schema) {
            throw ValidationError("reports over mismatched schemas in one panel: model '" + r.annotator_id + "' has '" +
                                  it->schema + "' and '" + r.schema + "'");
        }
        std::vector<double> values(it->axes.size(), 0.0);
        std::vector<bool> seen(it->axes.size(), false);
        const auto &schema = schemas.get(r.schema);
        for (const auto &c : r.per_class) {
            const auto idx = schema.index_of(c.label);
            if (!idx) {
                throw ValidationError("report class '" + c.label + "' is not in schema '" + r.schema + "'");
            }
            values[*idx] = c.f1;
            seen[*idx] = true;
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
            throw ValidationError("report for '" + r.annotator_id + "' does not cover every class of '" + r.schema + "'");
        }
        auto &slot = r.domain_tag == DomainTag::in_domain ? it->in_domain : it->cross_domain;
        if (slot) {
            throw ValidationError("panel '" + r.annotator_id + "' already has a " + std::string{ to_string(r.domain_tag) } +
                                  " series");
        }
        slot = std::move(values);
    }
    return panels;
}

namespace radar {

inline constexpr double panel_size = 360.0;
inline constexpr double radius = 120.0;
inline constexpr int columns = 3;

struct Point {
    double x;
    double y;
};

/// Axis k of n starts at 12 o'clock and proceeds clockwise.
[[nodiscard]] inline Point vertex(double cx, double cy, std::size_t k, std::size_t n, double value) {
    const double angle = -std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    return { cx + radius * value * std::cos(angle), cy + radius * value * std::sin(angle) };
}

inline std::string xml_escape(const std::string &s) {
    std::string out;
    for (const char c : s) {
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

inline std::string coord(double v) { return format_fixed(v, 2); }

inline std::string polygon_points(double cx, double cy, const std::vector<double> &values) {
    std::string pts;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const auto p = vertex(cx, cy, k, values.size(), std::clamp(values[k], 0.0, 1.0));
        pts += (k == 0 ? "" : " ") + coord(p.x) + "," + coord(p.y);
    }
    return pts;
}

}  // namespace radar

/// Static SVG grid of radar panels; F1 from 0 (centre) to 1 (outer ring).
/// In-domain series are blue, cross-domain series red.
inline void write_radar_svg(std::ostream &out, const std::vector<RadarPanel> &panels) {
    using namespace radar;
    const auto n_cols = static_cast<std::size_t>(std::min<std::size_t>(columns, std::max<std::size_t>(panels.size(), 1)));
    const auto n_rows = (panels.size() + n_cols - 1) / n_cols;
    const double width = panel_size * static_cast<double>(n_cols);
    const double height = panel_size * static_cast<double>(std::max<std::size_t>(n_rows, 1)) + 30.0;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << coord(width) << "\" height=\"" << coord(height)
        << "\" viewBox=\"0 0 " << coord(width) << ' ' << coord(height) << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<g font-size=\"12\"><rect x=\"10\" y=\"10\" width=\"12\" height=\"12\" fill=\"#1f77b4\"/>"
        << "<text x=\"28\" y=\"21\">in-domain</text>"
        << "<rect x=\"110\" y=\"10\" width=\"12\" height=\"12\" fill=\"#d62728\"/>"
        << "<text x=\"128\" y=\"21\">cross-domain</text></g>\n";
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const auto &panel = panels[p];
        const double cx = panel_size * (static_cast<double>(p % n_cols) + 0.5);
        const double cy = 30.0 + panel_size * (static_cast<double>(p / n_cols) + 0.5);
        const auto n = panel.axes.size();
        out << "<g class=\"panel\" data-model=\"" << xml_escape(panel.model) << "\" data-schema=\""
            << xml_escape(panel.schema) << "\">\n";
        out << "<text x=\"" << coord(cx) << "\" y=\"" << coord(cy - radius - 40.0)
            << "\" text-anchor=\"middle\" font-size=\"14\" font-weight=\"bold\">" << xml_escape(panel.model) << " ("
            << xml_escape(panel.schema) << ")</text>\n";
        for (const double ring : { 0.25, 0.5, 0.75, 1.0 }) {
            out << "<polygon class=\"grid\" points=\"" << polygon_points(cx, cy, std::vector<double>(n, ring))
                << "\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
        }
        for (std::size_t k = 0; k < n; ++k) {
            const auto tip = vertex(cx, cy, k, n, 1.0);
            const auto label = vertex(cx, cy, k, n, 1.18);
            out << "<line x1=\"" << coord(cx) << "\" y1=\"" << coord(cy) << "\" x2=\"" << coord(tip.x) << "\" y2=\""
                << coord(tip.y) << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
            out << "<text x=\"" << coord(label.x) << "\" y=\"" << coord(label.y)
                << "\" text-anchor=\"middle\" dominant-baseline=\"middle\" font-size=\"10\">" << xml_escape(panel.axes[k])
                << "</text>\n";
        }
        const auto series = [&](const std::optional<std::vector<double>> &values, const char *cls, const char *color) {
            if (values) {
                out << "<polygon class=\"" << cls << "\" points=\"" << polygon_points(cx, cy, *values) << "\" fill=\""
                    << color << "\" fill-opacity=\"0.25\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
            }
        };
        series(panel.in_domain, "in_domain", "#1f77b4");
        series(panel.cross_domain, "cross_domain", "#d62728");
        out << "</g>\n";
    }
    out << "</svg>\n";
}

}  // namespace citeframe
