#include "citeframe/records.hpp"
#include "citeframe/report.hpp"

#include "mock_server.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace citeframe;
namespace fs = std::filesystem;

namespace {

const std::string cli = CITEFRAME_CLI_PATH;
const std::string fixtures = CITEFRAME_FIXTURE_DIR;

struct RunResult {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("citeframe_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    RunResult run(const std::string &args) const {
        const auto out = dir_ / "stdout.txt";
        const auto err = dir_ / "stderr.txt";
        const auto cmd = "'" + cli + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
        const int status = std::system(cmd.c_str());
        return { WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err) };
    }

    fs::path write(const std::string &name, const std::string &text) const {
        const auto p = dir_ / name;
        std::ofstream(p, std::ios::binary) << text;
        return p;
    }

    std::string path(const std::string &name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("validate").code, 2);
    EXPECT_EQ(run("validate --input /nonexistent/corpus.jsonl").code, 2);
    EXPECT_EQ(run("annotate --schema soft-intent --input " + fixtures + "/corpus10.jsonl --out x.jsonl").code, 2);
    EXPECT_EQ(run("drop").code, 2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, UnreachableBackendExitsOne) {
    const auto conf = write("backend.conf", "endpoint_url = http://127.0.0.1:9\nmodel_name = m\nmax_retries = 0\n"
                                            "request_timeout = 2\ncache_dir = " + path("cache") + "\n");
    const auto r = run("annotate --schema soft-intent --input " + fixtures + "/corpus10.jsonl --backend-config " +
                       conf.string() + " --out " + path("out.jsonl"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("batch aborted"), std::string::npos);
    EXPECT_TRUE(slurp(path("out.jsonl")).empty());
}

TEST_F(Cli, UnknownSchemaExitsOne) {
    const auto conf = write("backend.conf", "model_name = m\ncache_dir = " + path("cache") + "\n");
    const auto r = run("annotate --schema frankenstein --input " + fixtures + "/corpus10.jsonl --backend-config " +
                       conf.string() + " --out " + path("out.jsonl"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("frankenstein"), std::string::npos);
}

TEST_F(Cli, AnnotateAgainstMockServer) {
    testing_support::MockChatServer server([](const std::string &, const std::string &, int) {
        return testing_support::CannedReply{ 200, "Because.\nLABEL: Use" };
    });
    const auto conf = write("backend.conf", "endpoint_url = " + server.url() + "\nmodel_name = mock\ncache_dir = " +
                                                path("cache") + "\n");
    const auto r = run("annotate --schema soft-intent --input " + fixtures + "/corpus10.jsonl --backend-config " +
                       conf.string() + " --runs 3 --out " + path("a.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("records\t40"), std::string::npos);
    const auto recs = load_records(path("a.jsonl"));
    EXPECT_EQ(recs.size(), 40u);
    EXPECT_EQ(server.requests(), 30);
}

TEST_F(Cli, MapRewritesAclArcLabels) {
    std::string text;
    const char *labels[] = { "Background", "ComparisonContrast", "Motivation", "Uses", "Extension", "Future" };
    for (int i = 0; i < 6; ++i) {
        text += R"({"instance_id":"i)" + std::to_string(i) + R"(","annotator_id":"m","schema":"acl-arc","run":0,"label":")" +
                labels[i] + R"(","rationale":null,"resolved":"majority"})" "\n";
    }
    const auto in = write("acl.jsonl", text);
    ASSERT_EQ(run("map --input " + in.string() + " --out " + path("sci.jsonl")).code, 0);
    const auto recs = load_records(path("sci.jsonl"));
    ASSERT_EQ(recs.size(), 6u);
    const char *expected[] = { "Background", "ResultComparison", "Background", "Method", "Background", "Background" };
    for (int i = 0; i < 6; ++i) {
        EXPECT_EQ(recs[i].label, expected[i]);
        EXPECT_EQ(recs[i].schema, "scicite");
    }
}

TEST_F(Cli, MapEdgeCases) {
    const auto empty = write("empty.jsonl", "");
    EXPECT_EQ(run("map --input " + empty.string() + " --out " + path("o.jsonl")).code, 0);
    EXPECT_TRUE(slurp(path("o.jsonl")).empty());

    const auto bad = write("bad.jsonl", R"({"instance_id":"a","schema":"acl-arc","label":"Uses"})" "\n"
                                        R"({"instance_id":"b","schema":"acl-arc","label":"Methode"})" "\n");
    const auto r = run("map --input " + bad.string() + " --out " + path("o2.jsonl"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("Methode"), std::string::npos);
    EXPECT_NE(r.err.find(":2"), std::string::npos);

    const auto gold = write("gold.jsonl", R"({"id":"a","context":"c","source_doc_id":"D","gold":{"acl-arc":"Uses"}})" "\n");
    ASSERT_EQ(run("map --input " + gold.string() + " --out " + path("g.jsonl")).code, 0);
    const auto j = nlohmann::json::parse(slurp(path("g.jsonl")));
    EXPECT_EQ(j.at("gold").at("scicite"), "Method");
    EXPECT_EQ(j.at("gold").at("acl-arc"), "Uses");
}

TEST_F(Cli, DropTableFromScores) {
    const auto r = run("drop --scores " + fixtures + "/soft_intent_scores.tsv --mean-prefix ZS --out " + path("drop.tsv"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, slurp(path("drop.tsv")));
    EXPECT_NE(r.out.find("soft-intent\tZS Llama\t0.72\t0.57\t21\tmedium\n"), std::string::npos);
    EXPECT_NE(r.out.find("soft-intent\tmean\t\t\t15.8\t\n"), std::string::npos);

    const auto unpaired = write("u.tsv", "framework\tclassifier\tin_f1\tcross_f1\nsoft-intent\tX\t0.5\t\n");
    EXPECT_EQ(run("drop --scores " + unpaired.string()).code, 1);
    const auto garbled = write("g.tsv", "soft-intent\tX\tabc\t0.5\n");
    EXPECT_EQ(run("drop --scores " + garbled.string()).code, 1);
}

TEST_F(Cli, AgreeNeedsTwoAnnotators) {
    const auto human = fixtures + "/human10.jsonl";
    const auto r = run("agree --input " + human);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("need at least two annotators"), std::string::npos);
}

TEST_F(Cli, AgreeIdenticalLabelsGiveOne) {
    std::ifstream in(fixtures + "/human10.jsonl");
    std::string line;
    std::string copy;
    while (std::getline(in, line)) {
        auto j = nlohmann::ordered_json::parse(line);
        j["annotator_id"] = "twin";
        copy += j.dump() + "\n";
    }
    const auto twin = write("twin.jsonl", copy);
    const auto r = run("agree --input " + twin.string() + " " + fixtures + "/human10.jsonl --out " + path("agree"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "\ttwin\tHUMAN\ntwin\t\t\nHUMAN\t1.0000\t\n");
    EXPECT_EQ(slurp(path("agree") + "/agreement.tsv"), r.out);
    const auto j = nlohmann::json::parse(slurp(path("agree") + "/agreement.json"));
    EXPECT_EQ(j.at("schema"), "soft-intent");
}

TEST_F(Cli, AgreeMisalignedSets) {
    std::ifstream in(fixtures + "/human10.jsonl");
    std::string line;
    std::string copy;
    for (int i = 0; std::getline(in, line); ++i) {
        if (i == 0) continue;
        auto j = nlohmann::ordered_json::parse(line);
        j["annotator_id"] = "partial";
        copy += j.dump() + "\n";
    }
    const auto part = write("partial.jsonl", copy);
    const auto r = run("agree --input " + part.string() + " " + fixtures + "/human10.jsonl");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("+c01"), std::string::npos);
}

TEST_F(Cli, EvaluateAndRadar) {
    const auto gold = fixtures + "/corpus10.jsonl";
    const auto pred = fixtures + "/human10.jsonl";
    auto r = run("evaluate --gold " + gold + " --pred " + pred + " --schema soft-intent --dataset fx --out " + path("rep"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto in_path = path("rep") + "/soft-intent.human.fx.in_domain.json";
    const auto in_report = load_eval_report(in_path);
    EXPECT_NEAR(in_report.accuracy, 0.8, 1e-12);
    EXPECT_TRUE(fs::exists(path("rep") + "/soft-intent.human.fx.in_domain.summary.tsv"));
    EXPECT_TRUE(fs::exists(path("rep") + "/soft-intent.human.fx.in_domain.per_class.tsv"));

    r = run("evaluate --gold " + gold + " --pred " + pred + " --schema soft-intent --dataset fx --domain Psychology --out " +
            path("rep"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto cross_path = path("rep") + "/soft-intent.human.fx.cross_domain.json";
    const auto cross = load_eval_report(cross_path);
    EXPECT_EQ(cross.total, 3u);
    EXPECT_EQ(cross.domain_tag, DomainTag::cross_domain);

    r = run("radar --input " + in_path + " " + cross_path + " --out " + path("radar"));
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream csv(slurp(path("radar") + "/radar.csv"));
    std::string row;
    int rows = 0;
    while (std::getline(csv, row)) ++rows;
    EXPECT_EQ(rows, 15);
    EXPECT_NE(slurp(path("radar") + "/radar.svg").find("<svg"), std::string::npos);

    r = run("drop --input " + in_path + " " + cross_path);
    EXPECT_EQ(r.code, 0) << r.err;

    EXPECT_EQ(run("evaluate --gold " + gold + " --pred " + pred + " --schema soft-intent --domain Nowhere --out " +
                  path("rep")).code,
              1);
}

TEST_F(Cli, ValidateCorpusAndSplit) {
    auto r = run("validate --input " + fixtures + "/corpus20.jsonl");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("instances\t20"), std::string::npos);
    EXPECT_NE(r.out.find("domain\tunknown\t1\t5.00%"), std::string::npos);

    r = run("validate --input " + fixtures + "/corpus20.jsonl --make-split 6 --out " + path("split.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    r = run("validate --input " + fixtures + "/corpus20.jsonl --split " + path("split.jsonl"));
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("split\tvalid"), std::string::npos);

    const auto leaky = write("leaky.jsonl", R"({"id":"c01","side":"train"})" "\n" R"({"id":"c02","side":"test"})" "\n");
    r = run("validate --input " + fixtures + "/corpus20.jsonl --split " + leaky.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("leak\tsource_doc_id\tD1"), std::string::npos);

    EXPECT_EQ(run("validate --input " + fixtures + "/corpus20.jsonl --make-split 6").code, 2);

    const auto dup = write("dup.jsonl", slurp(fixtures + "/corpus10.jsonl") + slurp(fixtures + "/corpus10.jsonl"));
    r = run("validate --input " + dup.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find(":11"), std::string::npos);
}
