#include "citeframe/schema.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

using namespace citeframe;

TEST(Schema, BuiltinSizesAndNames) {
    EXPECT_EQ(builtin_schema("soft-intent").size(), 7u);
    EXPECT_EQ(builtin_schema("soft-content").size(), 3u);
    EXPECT_EQ(builtin_schema("acl-arc").size(), 6u);
    EXPECT_EQ(builtin_schema("scicite").size(), 3u);
    EXPECT_EQ(builtin_schema("soft-intent").dimension(), Dimension::intent);
    EXPECT_EQ(builtin_schema("soft-content").dimension(), Dimension::content);
}

TEST(Schema, SoftIntentLabelSet) {
    const auto ids = list_labels(builtin_schema("soft-intent"));
    const std::vector<std::string> expected{ "Contextualize", "SignalGap", "HighlightLimitation", "JustifyDesignChoice",
                                             "Use", "Modify", "EvaluateAgainst" };
    EXPECT_EQ(ids, expected);
}

TEST(Schema, SoftContentOrder) {
    const std::vector<std::string> expected{ "PerformedWork", "Discovery", "ProducedResource" };
    EXPECT_EQ(list_labels(builtin_schema("soft-content")), expected);
}

TEST(Schema, AclArcAndSciCiteLabels) {
    const std::vector<std::string> acl{ "Background", "ComparisonContrast", "Motivation", "Uses", "Extension", "Future" };
    EXPECT_EQ(list_labels(builtin_schema("acl-arc")), acl);
    const std::vector<std::string> sci{ "Background", "Method", "ResultComparison" };
    EXPECT_EQ(list_labels(builtin_schema("scicite")), sci);
}

TEST(Schema, UnknownSchema) {
    EXPECT_THROW((void)builtin_schema("frankenstein"), UnknownSchemaError);
    EXPECT_THROW((void)SchemaRegistry::builtin().get("frankenstein"), UnknownSchemaError);
}

TEST(Schema, EveryLabelHasDefinition) {
    for (const auto &name : builtin_schema_names()) {
        for (const auto &l : builtin_schema(name).labels()) {
            EXPECT_FALSE(l.definition.empty()) << name << "/" << l.id;
        }
    }
    // the Use rule about the citing author being the actor is encoded
    const auto &use = builtin_schema("soft-intent").label(4);
    ASSERT_EQ(use.id, "Use");
    EXPECT_EQ(use.decision_rules.size(), 2u);
}

TEST(Schema, ValidateLabel) {
    const auto sci = builtin_schema("scicite");
    EXPECT_TRUE(validate_label(sci, "Method"));
    EXPECT_FALSE(validate_label(sci, "Uses"));
    const auto intent = builtin_schema("soft-intent");
    EXPECT_TRUE(validate_label(intent, "use"));
    EXPECT_TRUE(validate_label(intent, "evaluate against"));
    EXPECT_TRUE(validate_label(intent, "Justify-Design_Choice"));
    EXPECT_FALSE(validate_label(intent, ""));
    EXPECT_FALSE(validate_label(intent, "---"));
    EXPECT_EQ(intent.resolve("EVALUATEAGAINST").value(), "EvaluateAgainst");
}

TEST(Schema, CanonicalizationKeepsLabelsUnique) {
    for (const auto &name : builtin_schema_names()) {
        std::set<std::string> keys;
        for (const auto &id : list_labels(builtin_schema(name))) {
            EXPECT_TRUE(keys.insert(canonicalize_label(id)).second) << name << "/" << id;
        }
    }
}

TEST(Schema, NonMembersFailValidation) {
    const std::vector<std::string> probes{ "Uses", "Method", "Comparez", "Backgroundd", "Contextualise", "Result", "x" };
    for (const auto &name : builtin_schema_names()) {
        const auto schema = builtin_schema(name);
        std::set<std::string> members;
        for (const auto &id : list_labels(schema)) {
            members.insert(canonicalize_label(id));
            EXPECT_TRUE(validate_label(schema, id));
        }
        for (const auto &p : probes) {
            EXPECT_EQ(validate_label(schema, p), members.count(canonicalize_label(p)) > 0) << name << "/" << p;
        }
    }
}

TEST(Schema, ReferentiallyTransparent) {
    for (const auto &name : builtin_schema_names()) {
        EXPECT_EQ(builtin_schema(name), builtin_schema(name));
        EXPECT_EQ(list_labels(builtin_schema(name)), list_labels(builtin_schema(name)));
    }
}

TEST(Schema, ConstructorRejectsCollisions) {
    EXPECT_THROW(LabelSchema("x", Dimension::intent, { { "Use", "Use", "d", {} }, { "use", "use", "d", {} } }),
                 ValidationError);
    EXPECT_THROW(LabelSchema("x", Dimension::intent, { { "", "", "d", {} } }), ValidationError);
    EXPECT_THROW(LabelSchema("x", Dimension::intent, { { "A", "A", "", {} } }), ValidationError);
}

TEST(Mapping, AclArcToSciCite) {
    const auto m = acl_arc_to_scicite();
    EXPECT_EQ(map_label(m, "Uses"), "Method");
    EXPECT_EQ(map_label(m, "ComparisonContrast"), "ResultComparison");
    EXPECT_EQ(map_label(m, "Background"), "Background");
    EXPECT_EQ(map_label(m, "Extension"), "Background");
    EXPECT_EQ(map_label(m, "Motivation"), "Background");
    EXPECT_EQ(map_label(m, "Future"), "Background");
    EXPECT_EQ(map_label(m, "comparison contrast"), "ResultComparison");
    EXPECT_THROW((void)map_label(m, "Methode"), ValidationError);
    EXPECT_THROW((void)map_label(m, "Method"), ValidationError);
}

TEST(Mapping, TotalAndSurjective) {
    const auto m = acl_arc_to_scicite();
    const auto sci = builtin_schema("scicite");
    std::set<std::string> image;
    for (const auto &id : list_labels(builtin_schema("acl-arc"))) {
        const auto to = map_label(m, id);
        EXPECT_TRUE(validate_label(sci, to));
        image.insert(to);
    }
    EXPECT_EQ(image, (std::set<std::string>{ "Background", "Method", "ResultComparison" }));
}

TEST(Mapping, PartialMappingRejected) {
    EXPECT_THROW(SchemaMapping(builtin_schema("acl-arc"), builtin_schema("scicite"), { { "Uses", "Method" } }),
                 ValidationError);
    EXPECT_THROW((void)builtin_mapping("soft-intent", "scicite"), ValidationError);
}

class SchemaOverride : public ::testing::Test {
  protected:
    void SetUp() override {
        path_ = std::filesystem::temp_directory_path() /
                ("citeframe_schema_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + ".jsonl");
    }
    void TearDown() override { std::filesystem::remove(path_); }
    void write(const std::string &text) { std::ofstream(path_) << text; }
    std::filesystem::path path_;
};

TEST_F(SchemaOverride, AddsNewSchema) {
    write(R"({"schema":"tiny","id":"A","display_name":"A","definition":"first","rules":["r1"]}
{"schema":"tiny","id":"B","display_name":"B","definition":"second","rules":[],"dimension":"content"}
)");
    auto reg = SchemaRegistry::builtin();
    reg.load_overrides(path_.string());
    const auto &tiny = reg.get("tiny");
    EXPECT_EQ(list_labels(tiny), (std::vector<std::string>{ "A", "B" }));
    EXPECT_EQ(tiny.dimension(), Dimension::content);
    EXPECT_EQ(tiny.label(0).decision_rules, std::vector<std::string>{ "r1" });
}

TEST_F(SchemaOverride, RewordsBuiltin) {
    write(R"({"schema":"scicite","id":"Background","display_name":"BG","definition":"reworded","rules":[]}
{"schema":"scicite","id":"Method","display_name":"M","definition":"reworded","rules":[]}
{"schema":"scicite","id":"ResultComparison","display_name":"RC","definition":"reworded","rules":[]}
)");
    auto reg = SchemaRegistry::builtin();
    reg.load_overrides(path_.string());
    EXPECT_EQ(reg.get("scicite").label(1).definition, "reworded");
}

TEST_F(SchemaOverride, BuiltinLabelSetIsFixed) {
    write(R"({"schema":"scicite","id":"Background","display_name":"BG","definition":"d","rules":[]}
)");
    auto reg = SchemaRegistry::builtin();
    EXPECT_THROW(reg.load_overrides(path_.string()), FormatError);
}

TEST_F(SchemaOverride, MalformedLineReported) {
    write("{\"schema\":\"tiny\",\"id\":\"A\",\"definition\":\"d\"}\nnot json\n");
    auto reg = SchemaRegistry::builtin();
    try {
        reg.load_overrides(path_.string());
        FAIL() << "expected FormatError";
    } catch (const FormatError &e) {
        EXPECT_EQ(e.line(), 2u);
    }
}
