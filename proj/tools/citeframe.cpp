// citeframe: annotate citation contexts with an LLM, measure agreement,
// evaluate predictions and produce drop tables and radar charts.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "citeframe/annotator.hpp"
#include "citeframe/corpus.hpp"
#include "citeframe/llm_backend.hpp"
#include "citeframe/metrics.hpp"
#include "citeframe/records.hpp"
#include "citeframe/report.hpp"
#include "citeframe/schema.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace citeframe;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_runtime = 1;
constexpr int exit_usage = 2;

struct GlobalOptions {
    std::string schema_file;
};

SchemaRegistry load_registry(const GlobalOptions &g) {
    auto reg = SchemaRegistry::builtin();
    if (!g.schema_file.empty()) {
        reg.load_overrides(g.schema_file);
    }
    return reg;
}

std::ofstream open_output(const fs::path &path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

std::string file_stem_safe(std::string s) {
    for (auto &c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
            c = '_';
        }
    }
    return s;
}

// ---------------------------------------------------------------- annotate

struct AnnotateOptions {
    std::string schema;
    std::string input;
    std::string backend_config;
    std::string template_path;
    std::string out;
    int runs = 3;
};

int cmd_annotate(const GlobalOptions &g, const AnnotateOptions &o) {
    const auto reg = load_registry(g);
    const auto &schema = reg.get(o.schema);
    const auto corpus = load_instances(o.input, reg);
    const auto cfg = load_backend_config(o.backend_config);
    const auto tmpl = o.template_path.empty() ? default_template(schema) : load_template(o.template_path, schema);
    CompletionClient client(cfg);
    const auto result = annotate_batch(corpus, schema, tmpl, client, o.runs);

    auto out = open_output(o.out);
    write_records(out, result.records);
    out.close();

    std::map<Resolution, std::size_t> counts;
    for (const auto &r : result.records) {
        if (r.run == 0) {
            ++counts[r.resolved];
        }
    }
    std::cout << "instances\t" << result.instances_done << "/" << corpus.size() << '\n'
              << "records\t" << result.records.size() << '\n';
    for (const auto r : { Resolution::direct, Resolution::majority, Resolution::tie_extra_run, Resolution::unresolved }) {
        std::cout << to_string(r) << '\t' << counts[r] << '\n';
    }
    if (result.error) {
        std::cerr << "citeframe annotate: batch aborted: " << *result.error << '\n';
        return exit_runtime;
    }
    return exit_ok;
}

// ---------------------------------------------------------------- agree

struct AgreeOptions {
    std::vector<std::string> inputs;
    std::string schema;
    std::string out;
};

int cmd_agree(const GlobalOptions &g, const AgreeOptions &o) {
    const auto reg = load_registry(g);
    struct Annotator {
        std::string id;
        std::vector<std::string> order;
        std::map<std::string, std::optional<std::string>> labels;
    };
    std::vector<Annotator> annotators;
    std::string schema = o.schema;
    for (const auto &path : o.inputs) {
        for (const auto &r : load_records(path, reg)) {
            if (r.run != 0) {
                continue;
            }
            if (schema.empty()) {
                schema = r.schema;
            }
            if (r.schema != schema) {
                if (!o.schema.empty()) {
                    continue;
                }
                throw ValidationError("annotation files mix schemas '" + schema + "' and '" + r.schema +
                                      "'; pass --schema");
            }
            auto it = std::find_if(annotators.begin(), annotators.end(), [&](const Annotator &a) { return a.id == r.annotator_id; });
            if (it == annotators.end()) {
                annotators.push_back({ r.annotator_id, {}, {} });
                it = std::prev(annotators.end());
            }
            it->order.push_back(r.instance_id);
            it->labels[r.instance_id] = r.is_resolved() ? std::optional<std::string>(r.label) : std::nullopt;
        }
    }
    if (annotators.size() < 2) {
        throw ValidationError("need at least two annotators");
    }
    const auto &ref = annotators.front();
    for (std::size_t a = 1; a < annotators.size(); ++a) {
        std::vector<std::string> only_ref;
        std::vector<std::string> only_other;
        for (const auto &id : ref.order) {
            if (annotators[a].labels.count(id) == 0) {
                only_ref.push_back(id);
            }
        }
        for (const auto &id : annotators[a].order) {
            if (ref.labels.count(id) == 0) {
                only_other.push_back(id);
            }
        }
        if (!only_ref.empty() || !only_other.empty()) {
            std::ostringstream msg;
            msg << "misaligned instance sets between '" << ref.id << "' and '" << annotators[a].id << "':";
            for (const auto &id : only_ref) {
                msg << " -" << id;
            }
            for (const auto &id : only_other) {
                msg << " +" << id;
            }
            throw ValidationError(msg.str());
        }
    }
    std::vector<AnnotatorLabels> aligned;
    for (const auto &a : annotators) {
        AnnotatorLabels al{ a.id, {} };
        for (const auto &id : ref.order) {
            al.labels.push_back(a.labels.at(id));
        }
        aligned.push_back(std::move(al));
    }
    const auto matrix = agreement_matrix(std::move(aligned));
    std::ostringstream tsv;
    write_agreement_tsv(tsv, matrix);
    std::cout << tsv.str();
    if (!o.out.empty()) {
        const fs::path dir(o.out);
        auto f = open_output(dir / "agreement.tsv");
        f << tsv.str();
        auto j = open_output(dir / "agreement.json");
        auto doc = to_json(matrix);
        doc["schema"] = schema;
        j << doc.dump(2) << '\n';
    }
    return exit_ok;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
    std::string gold;
    std::string pred;
    std::string schema;
    std::vector<std::string> domains;
    std::string dataset;
    std::string domain_tag;
    std::string annotator;
    std::string out;
};

int cmd_evaluate(const GlobalOptions &g, const EvaluateOptions &o) {
    const auto reg = load_registry(g);
    const auto &schema = reg.get(o.schema);
    const auto corpus = load_instances(o.gold, reg);
    std::set<std::string> known;
    for (const auto &inst : corpus) {
        known.insert(inst.id);
    }
    std::vector<AnnotationRecord> preds;
    std::set<std::string> annotators;
    for (auto &r : load_records(o.pred, reg)) {
        if (r.run != 0 || r.schema != schema.name()) {
            continue;
        }
        if (!o.annotator.empty() && r.annotator_id != o.annotator) {
            continue;
        }
        if (known.count(r.instance_id) == 0) {
            throw ValidationError("prediction for unknown instance id '" + r.instance_id + "'");
        }
        annotators.insert(r.annotator_id);
        preds.push_back(std::move(r));
    }
    if (annotators.size() > 1) {
        throw ValidationError("prediction file holds several annotators; pick one with --annotator");
    }
    auto scope = corpus;
    if (!o.domains.empty()) {
        scope = filter_by_domain(corpus, std::set<std::string>(o.domains.begin(), o.domains.end()));
        std::set<std::string> in_scope;
        for (const auto &inst : scope) {
            in_scope.insert(inst.id);
        }
        std::erase_if(preds, [&](const AnnotationRecord &r) { return in_scope.count(r.instance_id) == 0; });
    }
    const auto cm = confusion_matrix(scope, preds, schema);
    if (cm.total() == 0) {
        throw ValidationError("no scored instances");
    }
    auto report = evaluate(cm);
    report.annotator_id = annotators.empty() ? (o.annotator.empty() ? std::string{ "unknown" } : o.annotator)
                                             : *annotators.begin();
    report.dataset = o.dataset.empty() ? fs::path(o.gold).stem().string() : o.dataset;
    report.domain_tag = o.domain_tag.empty() ? (o.domains.empty() ? DomainTag::in_domain : DomainTag::cross_domain)
                                             : parse_domain_tag(o.domain_tag);

    std::ostringstream summary;
    write_eval_summary_tsv(summary, report);
    std::cout << summary.str();
    const fs::path dir(o.out);
    const auto stem = file_stem_safe(report.schema + "." + report.annotator_id + "." + report.dataset + "." +
                                     std::string{ to_string(report.domain_tag) });
    open_output(dir / (stem + ".json")) << to_json(report).dump(2) << '\n';
    open_output(dir / (stem + ".summary.tsv")) << summary.str();
    auto per_class = open_output(dir / (stem + ".per_class.tsv"));
    write_per_class_tsv(per_class, report);
    return exit_ok;
}

// ---------------------------------------------------------------- drop

struct DropOptions {
    std::vector<std::string> inputs;
    std::string scores;
    std::string mean_prefix;
    std::string out;
};

std::vector<DropRow> rows_from_scores(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path, 0, "cannot open scores file");
    }
    std::vector<DropRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) {
            cols.push_back(col);
        }
        if (lineno == 1 && !cols.empty() && cols[0] == "framework") {
            continue;
        }
        if (cols.size() != 4) {
            throw FormatError(path, lineno, "expected 4 tab-separated columns: framework, classifier, in_f1, cross_f1");
        }
        DropRow row{ cols[0], cols[1], {}, {}, {} };
        const auto num = [&](const std::string &s) -> std::optional<double> {
            if (s.empty()) {
                return std::nullopt;
            }
            std::istringstream v(s);
            v.imbue(std::locale::classic());
            double d = 0;
            v >> d;
            if (v.fail() || !v.eof()) {
                throw FormatError(path, lineno, "not a number: '" + s + "'");
            }
            return d;
        };
        row.in_f1 = num(cols[2]);
        row.cross_f1 = num(cols[3]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<DropRow> rows_from_reports(const std::vector<std::string> &paths) {
    std::vector<DropRow> rows;
    for (const auto &path : paths) {
        const auto r = load_eval_report(path);
        auto it = std::find_if(rows.begin(), rows.end(), [&](const DropRow &d) {
            return d.framework == r.schema && d.classifier == r.annotator_id;
        });
        if (it == rows.end()) {
            rows.push_back({ r.schema, r.annotator_id, {}, {}, {} });
            it = std::prev(rows.end());
        }
        auto &slot = r.domain_tag == DomainTag::in_domain ? it->in_f1 : it->cross_f1;
        if (slot) {
            throw ValidationError("duplicate " + std::string{ to_string(r.domain_tag) } + " report for " + r.schema +
                                  " / " + r.annotator_id);
        }
        slot = r.macro_f1;
    }
    return rows;
}

int cmd_drop(const DropOptions &o) {
    auto rows = o.scores.empty() ? rows_from_reports(o.inputs) : rows_from_scores(o.scores);
    if (!o.scores.empty() && !o.inputs.empty()) {
        auto more = rows_from_reports(o.inputs);
        rows.insert(rows.end(), more.begin(), more.end());
    }
    const auto table = build_drop_table(std::move(rows), o.mean_prefix);
    std::ostringstream tsv;
    write_drop_tsv(tsv, table);
    std::cout << tsv.str();
    if (!o.out.empty()) {
        open_output(o.out) << tsv.str();
    }
    return exit_ok;
}

// ---------------------------------------------------------------- radar

struct RadarOptions {
    std::vector<std::string> inputs;
    std::string out;
};

int cmd_radar(const GlobalOptions &g, const RadarOptions &o) {
    const auto reg = load_registry(g);
    std::vector<EvalReport> reports;
    for (const auto &p : o.inputs) {
        reports.push_back(load_eval_report(p));
    }
    const auto panels = build_radar_panels(reports, reg);
    const fs::path dir(o.out);
    auto csv = open_output(dir / "radar.csv");
    write_radar_csv(csv, reports);
    auto svg = open_output(dir / "radar.svg");
    write_radar_svg(svg, panels);
    std::cout << "panels\t" << panels.size() << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------- map

struct MapOptions {
    std::string input;
    std::string out;
    std::string from = std::string{ acl_arc_schema };
    std::string to = std::string{ scicite_schema };
};

int cmd_map(const MapOptions &o) {
    const auto mapping = builtin_mapping(o.from, o.to);
    std::ifstream in(o.input);
    if (!in) {
        throw FormatError(o.input, 0, "cannot open input");
    }
    std::ostringstream result;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::ordered_json rec;
        try {
            rec = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::exception &e) {
            throw FormatError(o.input, lineno, std::string{ "malformed record: " } + e.what());
        }
        bool mapped = false;
        try {
            if (rec.contains("label")) {
                const bool unresolved = rec.value("resolved", std::string{}) == "unresolved";
                if (!unresolved) {
                    if (rec.contains("schema") && rec["schema"] != o.from) {
                        throw ValidationError("record schema is '" + rec["schema"].get<std::string>() + "', expected '" +
                                              o.from + "'");
                    }
                    rec["label"] = map_label(mapping, rec["label"].get<std::string>());
                }
                if (rec.contains("schema")) {
                    rec["schema"] = o.to;
                }
                mapped = true;
            }
            if (rec.contains("gold") && rec["gold"].is_object() && rec["gold"].contains(o.from) &&
                !rec["gold"][o.from].is_null()) {
                rec["gold"][o.to] = map_label(mapping, rec["gold"][o.from].get<std::string>());
                mapped = true;
            }
        } catch (const ValidationError &e) {
            throw FormatError(o.input, lineno, e.what());
        } catch (const nlohmann::json::exception &e) {
            throw FormatError(o.input, lineno, e.what());
        }
        if (!mapped) {
            throw FormatError(o.input, lineno, "record has neither 'label' nor gold." + o.from);
        }
        result << rec.dump() << '\n';
    }
    open_output(o.out) << result.str();
    return exit_ok;
}

// ---------------------------------------------------------------- validate

struct ValidateOptions {
    std::string input;
    std::string split;
    std::size_t make_split = 0;
    std::string out;
};

int cmd_validate(const GlobalOptions &g, const ValidateOptions &o) {
    const auto reg = load_registry(g);
    const auto corpus = load_instances(o.input, reg);
    std::map<std::string, std::size_t> domains;
    std::map<std::string, std::size_t> gold;
    for (const auto &inst : corpus) {
        ++domains[inst.domain.value_or(std::string{ unknown_domain })];
        for (const auto &[schema, label] : inst.gold) {
            ++gold[schema];
        }
    }
    std::cout << "instances\t" << corpus.size() << '\n';
    for (const auto &[schema, n] : gold) {
        std::cout << "gold\t" << schema << '\t' << n << '\n';
    }
    for (const auto &[d, n] : domains) {
        std::cout << "domain\t" << d << '\t' << n << '\t'
                  << format_fixed(100.0 * static_cast<double>(n) / static_cast<double>(corpus.size()), 2) << "%\n";
    }
    int rc = exit_ok;
    if (o.make_split > 0) {
        const auto split = make_split(corpus, o.make_split);
        auto out = open_output(o.out);
        write_split(out, split);
        std::cout << "split\ttrain=" << split.train.size() << "\ttest=" << split.test.size() << '\n';
    }
    if (!o.split.empty()) {
        const auto report = check_split(corpus, load_split(o.split));
        for (const auto &doc : report.leaking_docs) {
            std::cout << "leak\tsource_doc_id\t" << doc << '\n';
        }
        for (const auto &id : report.overlapping_ids) {
            std::cout << "leak\tid\t" << id << '\n';
        }
        std::cout << "split\t" << (report.valid() ? "valid" : "invalid") << '\n';
        if (!report.valid()) {
            rc = exit_runtime;
        }
    }
    return rc;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{ "citeframe: citation annotation, agreement and evaluation toolkit" };
    app.require_subcommand(1);
    GlobalOptions global;
    app.add_option("--schema-file", global.schema_file, "JSONL schema override file")->check(CLI::ExistingFile);

    AnnotateOptions ann;
    auto *annotate = app.add_subcommand("annotate", "annotate a corpus with repeated LLM runs and majority vote");
    annotate->add_option("--schema", ann.schema, "schema name")->required();
    annotate->add_option("--input", ann.input, "instance JSONL")->required()->check(CLI::ExistingFile);
    annotate->add_option("--backend-config", ann.backend_config, "key = value backend config")->required()->check(CLI::ExistingFile);
    annotate->add_option("--template", ann.template_path, "prompt template file")->check(CLI::ExistingFile);
    annotate->add_option("--runs", ann.runs, "runs per instance")->check(CLI::PositiveNumber)->capture_default_str();
    annotate->add_option("--out", ann.out, "output annotation JSONL")->required();

    AgreeOptions agr;
    auto *agree = app.add_subcommand("agree", "pairwise Cohen's kappa between annotation files");
    agree->add_option("--input", agr.inputs, "annotation files (human last or anywhere)")->required()->check(CLI::ExistingFile);
    agree->add_option("--schema", agr.schema, "schema to compare (default: the files' only schema)");
    agree->add_option("--out", agr.out, "output directory for agreement.tsv / agreement.json");

    EvaluateOptions ev;
    auto *evaluate_cmd = app.add_subcommand("evaluate", "accuracy, per-class and macro F1 of a prediction file");
    evaluate_cmd->add_option("--gold", ev.gold, "gold-bearing instance JSONL")->required()->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--pred", ev.pred, "annotation JSONL with run-0 predictions")->required()->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--schema", ev.schema, "schema name")->required();
    evaluate_cmd->add_option("--domain", ev.domains, "restrict to these domains ('unknown' = no domain)");
    evaluate_cmd->add_option("--dataset", ev.dataset, "dataset name recorded in the report");
    evaluate_cmd->add_option("--domain-tag", ev.domain_tag, "in_domain or cross_domain")
        ->check(CLI::IsMember({ "in_domain", "cross_domain" }));
    evaluate_cmd->add_option("--annotator", ev.annotator, "annotator id to evaluate");
    evaluate_cmd->add_option("--out", ev.out, "output directory")->required();

    DropOptions dr;
    auto *drop = app.add_subcommand("drop", "cross-domain macro-F1 drop table");
    drop->add_option("--input", dr.inputs, "EvalReport JSON files (paired in/cross)")->check(CLI::ExistingFile);
    drop->add_option("--scores", dr.scores, "TSV: framework, classifier, in_f1, cross_f1")->check(CLI::ExistingFile);
    drop->add_option("--mean-prefix", dr.mean_prefix, "average only classifiers with this prefix");
    drop->add_option("--out", dr.out, "output TSV");

    RadarOptions rd;
    auto *radar_cmd = app.add_subcommand("radar", "per-class F1 CSV and radar chart");
    radar_cmd->add_option("--input", rd.inputs, "EvalReport JSON files")->required()->check(CLI::ExistingFile);
    radar_cmd->add_option("--out", rd.out, "output directory")->required();

    MapOptions mp;
    auto *map_cmd = app.add_subcommand("map", "rewrite ACL-ARC labels as SciCite labels");
    map_cmd->add_option("--input", mp.input, "annotation or instance JSONL")->required()->check(CLI::ExistingFile);
    map_cmd->add_option("--out", mp.out, "output JSONL")->required();

    ValidateOptions va;
    auto *validate = app.add_subcommand("validate", "validate a corpus and, optionally, a split");
    validate->add_option("--input", va.input, "instance JSONL")->required()->check(CLI::ExistingFile);
    validate->add_option("--split", va.split, "split JSONL to check")->check(CLI::ExistingFile);
    auto *make = validate->add_option("--make-split", va.make_split, "write a document-grouped split with this many test instances");
    validate->add_option("--out", va.out, "output split JSONL for --make-split")->needs(make);
    make->needs(validate->get_option("--out"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_usage;
    }

    try {
        if (annotate->parsed()) return cmd_annotate(global, ann);
        if (agree->parsed()) return cmd_agree(global, agr);
        if (evaluate_cmd->parsed()) return cmd_evaluate(global, ev);
        if (drop->parsed()) {
            if (dr.inputs.empty() && dr.scores.empty()) {
                std::cerr << "citeframe drop: give --input reports or --scores\n";
                return exit_usage;
            }
            return cmd_drop(dr);
        }
        if (radar_cmd->parsed()) return cmd_radar(global, rd);
        if (map_cmd->parsed()) return cmd_map(mp);
        if (validate->parsed()) return cmd_validate(global, va);
    } catch (const std::exception &e) {
        std::cerr << "citeframe: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_usage;
}
