#include "citeframe/report.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

using namespace citeframe;

namespace {

std::vector<std::string> split_lines(const std::string &s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) {
        out.push_back(line);
    }
    return out;
}

std::vector<std::string> split_tabs(const std::string &line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) {
            return out;
        }
        start = tab + 1;
    }
}

EvalReport report_for(const std::string &schema_name, const std::string &model, DomainTag tag, double f1) {
    const auto schema = builtin_schema(schema_name);
    EvalReport r;
    r.schema = schema_name;
    r.annotator_id = model;
    r.domain_tag = tag;
    r.dataset = "fixture";
    r.accuracy = f1;
    r.macro_f1 = f1;
    r.total = 10;
    for (const auto &id : list_labels(schema)) {
        r.per_class.push_back({ id, f1, f1, f1, 3 });
    }
    return r;
}

}  // namespace

TEST(AgreementTsv, LowerTriangleGrid) {
    using L = std::optional<std::string>;
    const auto m = agreement_matrix({ { "human", { L{ "A" }, L{ "B" } } },
                                      { "m1", { L{ "A" }, L{ "B" } } },
                                      { "m2", { std::nullopt, std::nullopt } } });
    std::ostringstream out;
    write_agreement_tsv(out, m);
    const auto lines = split_lines(out.str());
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(split_tabs(lines[0]), (std::vector<std::string>{ "", "m1", "m2", "HUMAN" }));
    EXPECT_EQ(split_tabs(lines[1]), (std::vector<std::string>{ "m1", "", "", "" }));
    EXPECT_EQ(split_tabs(lines[2]), (std::vector<std::string>{ "m2", "NA", "", "" }));
    EXPECT_EQ(split_tabs(lines[3]), (std::vector<std::string>{ "HUMAN", "1.0000", "NA", "" }));

    const auto j = to_json(m);
    EXPECT_EQ(j.at("annotators").size(), 3u);
    EXPECT_EQ(j.at("pairs").size(), 3u);
}

TEST(EvalReportJson, RoundTrip) {
    auto r = report_for("scicite", "m", DomainTag::cross_domain, 0.5);
    r.excluded = 2;
    const auto back = eval_report_from_json(nlohmann::ordered_json::parse(to_json(r).dump()));
    EXPECT_EQ(back.schema, r.schema);
    EXPECT_EQ(back.annotator_id, r.annotator_id);
    EXPECT_EQ(back.domain_tag, r.domain_tag);
    EXPECT_EQ(back.macro_f1, r.macro_f1);
    EXPECT_EQ(back.excluded, 2u);
    ASSERT_EQ(back.per_class.size(), 3u);
    EXPECT_EQ(back.per_class[2].label, "ResultComparison");
}

TEST(EvalTsv, Shapes) {
    const auto r = report_for("soft-content", "m", DomainTag::in_domain, 2.0 / 3.0);
    std::ostringstream summary;
    write_eval_summary_tsv(summary, r);
    const auto s = split_lines(summary.str());
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0], eval_summary_header);
    EXPECT_EQ(split_tabs(s[1]), (std::vector<std::string>{ "soft-content", "m", "fixture", "in_domain", "0.67", "0.67", "10", "0" }));
    std::ostringstream per_class;
    write_per_class_tsv(per_class, r);
    const auto p = split_lines(per_class.str());
    ASSERT_EQ(p.size(), 4u);
    EXPECT_EQ(p[0], per_class_header);
    EXPECT_EQ(split_tabs(p[1]).size(), 9u);
}

TEST(DropTsv, SoftIntentTable) {
    std::vector<DropRow> rows{
        { "soft-intent", "ZS Llama", 0.72, 0.57, std::nullopt },  { "soft-intent", "ZS Mistral", 0.71, 0.57, std::nullopt },
        { "soft-intent", "ZS Gemma", 0.59, 0.55, std::nullopt },  { "soft-intent", "ZS Qwen", 0.75, 0.64, std::nullopt },
        { "soft-intent", "FT SciBERT", 0.53, 0.20, std::nullopt }, { "soft-intent", "FT Qwen-Small", 0.65, 0.56, std::nullopt },
    };
    const auto table = build_drop_table(rows, "ZS");
    ASSERT_EQ(table.means.size(), 1u);
    EXPECT_DOUBLE_EQ(table.means[0].second, 15.75);
    std::ostringstream out;
    write_drop_tsv(out, table);
    const auto lines = split_lines(out.str());
    ASSERT_EQ(lines.size(), 8u);
    EXPECT_EQ(split_tabs(lines[1]), (std::vector<std::string>{ "soft-intent", "ZS Llama", "0.72", "0.57", "21", "medium" }));
    EXPECT_EQ(split_tabs(lines[5]), (std::vector<std::string>{ "soft-intent", "FT SciBERT", "0.53", "0.20", "62", "large" }));
    EXPECT_EQ(split_tabs(lines[7]), (std::vector<std::string>{ "soft-intent", "mean", "", "", "15.8", "" }));

    EXPECT_DOUBLE_EQ(build_drop_table(rows).means[0].second, (21.0 + 20 + 7 + 15 + 62 + 14) / 6.0);
}

TEST(DropTsv, UnpairedAndUndefined) {
    EXPECT_THROW((void)build_drop_table({ { "f", "c", 0.5, std::nullopt, std::nullopt } }), ValidationError);
    const auto t = build_drop_table({ { "f", "c", 0.0, 0.3, std::nullopt }, { "f", "d", 0.5, 0.25, std::nullopt } });
    EXPECT_FALSE(t.rows[0].drop);
    ASSERT_EQ(t.means.size(), 1u);
    EXPECT_DOUBLE_EQ(t.means[0].second, 50.0);
    std::ostringstream out;
    write_drop_tsv(out, t);
    EXPECT_NE(out.str().find("undefined\tundefined"), std::string::npos);
}

TEST(RadarCsv, OneRowPerClassAndSeries) {
    const std::vector<EvalReport> reports{ report_for("soft-intent", "m", DomainTag::in_domain, 0.5),
                                           report_for("soft-intent", "m", DomainTag::cross_domain, 0.25) };
    std::ostringstream out;
    write_radar_csv(out, reports);
    const auto lines = split_lines(out.str());
    ASSERT_EQ(lines.size(), 15u);
    EXPECT_EQ(lines[0], "framework,model,class,domain_tag,f1");
    EXPECT_EQ(lines[1], "soft-intent,m,Contextualize,in_domain,0.5000");
    EXPECT_EQ(lines[14], "soft-intent,m,EvaluateAgainst,cross_domain,0.2500");
}

TEST(RadarPanels, PerfectScorePolygonTouchesOuterRing) {
    const auto panels = build_radar_panels({ report_for("scicite", "m", DomainTag::in_domain, 1.0),
                                             report_for("scicite", "m", DomainTag::cross_domain, 0.0) },
                                           SchemaRegistry::builtin());
    ASSERT_EQ(panels.size(), 1u);
    std::ostringstream out;
    write_radar_svg(out, panels);
    const auto svg = out.str();
    const std::regex poly("<polygon class=\"in_domain\" points=\"([^\"]+)\"");
    std::smatch match;
    ASSERT_TRUE(std::regex_search(svg, match, poly));
    std::istringstream pts(match[1].str());
    std::string pt;
    const double cx = radar::panel_size / 2.0;
    const double cy = 30.0 + radar::panel_size / 2.0;
    int count = 0;
    while (pts >> pt) {
        const auto comma = pt.find(',');
        const double x = std::stod(pt.substr(0, comma));
        const double y = std::stod(pt.substr(comma + 1));
        EXPECT_NEAR(std::hypot(x - cx, y - cy), radar::radius, 0.01);
        ++count;
    }
    EXPECT_EQ(count, 3);
    EXPECT_NE(svg.find("class=\"cross_domain\""), std::string::npos);
    EXPECT_NE(svg.find("#1f77b4"), std::string::npos);
    EXPECT_NE(svg.find("#d62728"), std::string::npos);
}

TEST(RadarPanels, Errors) {
    const auto &reg = SchemaRegistry::builtin();
    EXPECT_THROW((void)build_radar_panels({ report_for("scicite", "m", DomainTag::in_domain, 0.5),
                                            report_for("soft-intent", "m", DomainTag::cross_domain, 0.5) },
                                          reg),
                 ValidationError);
    EXPECT_THROW((void)build_radar_panels({ report_for("scicite", "m", DomainTag::in_domain, 0.5),
                                            report_for("scicite", "m", DomainTag::in_domain, 0.4) },
                                          reg),
                 ValidationError);
    auto partial = report_for("scicite", "m", DomainTag::in_domain, 0.5);
    partial.per_class.pop_back();
    EXPECT_THROW((void)build_radar_panels({ partial }, reg), ValidationError);
}
