#pragma once

// Citation-instance corpora: JSONL loading, train/test split validation and
// domain filtering.

#include "citeframe/error.hpp"
#include "citeframe/schema.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace citeframe {

using ordered_json = nlohmann::ordered_json;

struct CitationInstance {
    std::string id;
    std::string context;
    std::optional<std::string> citing_title;
    std::optional<std::string> cited_title;
    std::optional<std::string> section;
    std::string source_doc_id;
    std::optional<std::string> domain;
    /// schema name -> label id
    std::map<std::string, std::string> gold;
    /// Fields not listed above, kept for round-tripping.
    ordered_json extra = ordered_json::object();

    [[nodiscard]] std::optional<std::string> gold_for(std::string_view schema) const {
        if (const auto it = gold.find(std::string{ schema }); it != gold.end()) {
            return it->second;
        }
        return std::nullopt;
    }
};

/// Sentinel domain that selects instances without a domain.
inline constexpr std::string_view unknown_domain = "unknown";

namespace detail {

inline std::optional<std::string> optional_string(const ordered_json &rec, const char *key) {
    const auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) {
        return std::nullopt;
    }
    return it->get<std::string>();
}

inline bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace detail

/// Parses one instance record. Gold labels are validated against `schemas`
/// and stored in their declared spelling.
[[nodiscard]] inline CitationInstance parse_instance(const ordered_json &rec, const SchemaRegistry &schemas) {
    if (!rec.is_object()) {
        throw ValidationError("record is not a JSON object");
    }
    CitationInstance inst;
    inst.id = rec.at("id").get<std::string>();
    if (inst.id.empty()) {
        throw ValidationError("empty id");
    }
    inst.context = rec.at("context").get<std::string>();
    if (detail::is_blank(inst.context)) {
        throw ValidationError("instance '" + inst.id + "': empty context");
    }
    inst.citing_title = detail::optional_string(rec, "citing_title");
    inst.cited_title = detail::optional_string(rec, "cited_title");
    inst.section = detail::optional_string(rec, "section");
    inst.source_doc_id = rec.at("source_doc_id").get<std::string>();
    inst.domain = detail::optional_string(rec, "domain");
    if (const auto it = rec.find("gold"); it != rec.end() && !it->is_null()) {
        if (!it->is_object()) {
            throw ValidationError("instance '" + inst.id + "': gold must be an object");
        }
        for (const auto &[schema_name, value] : it->items()) {
            if (value.is_null()) {
                continue;
            }
            if (!schemas.contains(schema_name)) {
                throw ValidationError("instance '" + inst.id + "': gold refers to unknown schema '" + schema_name + "'");
            }
            const auto raw = value.get<std::string>();
            const auto resolved = schemas.get(schema_name).resolve(raw);
            if (!resolved) {
                throw ValidationError("instance '" + inst.id + "': invalid " + schema_name + " gold label '" + raw + "'");
            }
            inst.gold.emplace(schema_name, *resolved);
        }
    }
    static const std::set<std::string> known{ "id", "context", "citing_title", "cited_title", "section",
                                              "source_doc_id", "domain", "gold" };
    for (const auto &[key, value] : rec.items()) {
        if (known.count(key) == 0) {
            inst.extra[key] = value;
        }
    }
    return inst;
}

[[nodiscard]] inline ordered_json to_json(const CitationInstance &inst) {
    ordered_json rec;
    rec["id"] = inst.id;
    rec["context"] = inst.context;
    const auto put = [&rec](const char *key, const std::optional<std::string> &v) {
        rec[key] = v ? ordered_json(*v) : ordered_json(nullptr);
    };
    put("citing_title", inst.citing_title);
    put("cited_title", inst.cited_title);
    put("section", inst.section);
    rec["source_doc_id"] = inst.source_doc_id;
    put("domain", inst.domain);
    rec["gold"] = ordered_json::object();
    for (const auto &[k, v] : inst.gold) {
        rec["gold"][k] = v;
    }
    for (const auto &[k, v] : inst.extra.items()) {
        rec[k] = v;
    }
    return rec;
}

/// Loads a JSONL instance file in file order. Blank lines are skipped.
[[nodiscard]] inline std::vector<CitationInstance> load_instances(const std::string &path,
                                                                  const SchemaRegistry &schemas = SchemaRegistry::builtin()) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path, 0, "cannot open instance file");
    }
    std::vector<CitationInstance> out;
    std::unordered_map<std::string, std::size_t> first_line;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_blank(line)) {
            continue;
        }
        CitationInstance inst;
        try {
            inst = parse_instance(ordered_json::parse(line), schemas);
        } catch (const nlohmann::json::exception &e) {
            throw FormatError(path, lineno, std::string{ "malformed record: " } + e.what());
        } catch (const ValidationError &e) {
            throw FormatError(path, lineno, e.what());
        }
        if (const auto [it, inserted] = first_line.emplace(inst.id, lineno); !inserted) {
            throw FormatError(path, lineno,
                              "duplicate id '" + inst.id + "' (first seen on line " + std::to_string(it->second) + ")");
        }
        out.push_back(std::move(inst));
    }
    return out;
}

inline void write_instances(std::ostream &out, const std::vector<CitationInstance> &instances) {
    for (const auto &inst : instances) {
        out << to_json(inst).dump() << '\n';
    }
}

struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

struct SplitReport {
    /// source_doc_ids with instances on both sides, in corpus order
    std::vector<std::string> leaking_docs;
    /// instance ids listed on both sides, in corpus order
    std::vector<std::string> overlapping_ids;

    [[nodiscard]] bool valid() const noexcept { return leaking_docs.empty() && overlapping_ids.empty(); }
};

/// Reports every leakage violation of `split`. Throws ValidationError for ids
/// not in the corpus.
[[nodiscard]] inline SplitReport check_split(const std::vector<CitationInstance> &corpus, const CorpusSplit &split) {
    std::unordered_map<std::string_view, const CitationInstance *> by_id;
    for (const auto &inst : corpus) {
        by_id.emplace(inst.id, &inst);
    }
    const auto collect = [&](const std::vector<std::string> &ids, std::string_view side) {
        std::unordered_set<std::string_view> out;
        for (const auto &id : ids) {
            if (by_id.count(id) == 0) {
                throw ValidationError("split " + std::string{ side } + " side references unknown id '" + id + "'");
            }
            out.insert(id);
        }
        return out;
    };
    const auto train = collect(split.train, "train");
    const auto test = collect(split.test, "test");

    std::unordered_set<std::string_view> train_docs;
    std::unordered_set<std::string_view> test_docs;
    for (const auto id : train) {
        train_docs.insert(by_id.at(id)->source_doc_id);
    }
    for (const auto id : test) {
        test_docs.insert(by_id.at(id)->source_doc_id);
    }

    SplitReport report;
    std::unordered_set<std::string_view> reported_docs;
    for (const auto &inst : corpus) {
        if (train.count(inst.id) && test.count(inst.id)) {
            report.overlapping_ids.push_back(inst.id);
        }
        const std::string_view doc = inst.source_doc_id;
        if (train_docs.count(doc) && test_docs.count(doc) && reported_docs.insert(doc).second) {
            report.leaking_docs.emplace_back(doc);
        }
    }
    return report;
}

/// Reads a split file: JSONL records `{"id": ..., "side": "train"|"test"}`.
[[nodiscard]] inline CorpusSplit load_split(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path, 0, "cannot open split file");
    }
    CorpusSplit split;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_blank(line)) {
            continue;
        }
        try {
            const auto rec = ordered_json::parse(line);
            auto id = rec.at("id").get<std::string>();
            const auto side = rec.at("side").get<std::string>();
            if (side == "train") {
                split.train.push_back(std::move(id));
            } else if (side == "test") {
                split.test.push_back(std::move(id));
            } else {
                throw FormatError(path, lineno, "side must be 'train' or 'test', got '" + side + "'");
            }
        } catch (const nlohmann::json::exception &e) {
            throw FormatError(path, lineno, std::string{ "malformed split record: " } + e.what());
        }
    }
    return split;
}

inline void write_split(std::ostream &out, const CorpusSplit &split) {
    for (const auto &id : split.train) {
        out << ordered_json{ { "id", id }, { "side", "train" } }.dump() << '\n';
    }
    for (const auto &id : split.test) {
        out << ordered_json{ { "id", id }, { "side", "test" } }.dump() << '\n';
    }
}

/// Groups instances by source document (first-appearance order) and moves
/// whole documents to the test side while they fit under `test_target`.
/// The result is re-validated before returning.
[[nodiscard]] inline CorpusSplit make_split(const std::vector<CitationInstance> &corpus, std::size_t test_target) {
    std::vector<std::string_view> doc_order;
    std::unordered_map<std::string_view, std::vector<std::string_view>> members;
    for (const auto &inst : corpus) {
        auto &m = members[inst.source_doc_id];
        if (m.empty()) {
            doc_order.push_back(inst.source_doc_id);
        }
        m.push_back(inst.id);
    }
    CorpusSplit split;
    std::size_t test_count = 0;
    for (const auto doc : doc_order) {
        const auto &ids = members.at(doc);
        const bool to_test = test_count + ids.size() <= test_target;
        if (to_test) {
            test_count += ids.size();
        }
        for (const auto id : ids) {
            (to_test ? split.test : split.train).emplace_back(id);
        }
    }
    if (!check_split(corpus, split).valid()) {
        throw Error("make_split produced a leaking split");
    }
    return split;
}

/// Keeps instances whose domain is in `domains`, in input order. Instances
/// without a domain are kept only when `unknown` is requested.
[[nodiscard]] inline std::vector<CitationInstance> filter_by_domain(const std::vector<CitationInstance> &corpus,
                                                                    const std::set<std::string> &domains) {
    std::vector<CitationInstance> out;
    const bool want_unknown = domains.count(std::string{ unknown_domain }) > 0;
    for (const auto &inst : corpus) {
        if (inst.domain ? domains.count(*inst.domain) > 0 : want_unknown) {
            out.push_back(inst);
        }
    }
    return out;
}

}  // namespace citeframe
