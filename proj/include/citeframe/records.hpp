#pragma once

// Annotation records: one observed label per (instance, annotator, schema, run).

#include "citeframe/error.hpp"
#include "citeframe/schema.hpp"

#include "json.hpp"

#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace citeframe {

enum class Resolution { direct, majority, tie_extra_run, unresolved };

[[nodiscard]] inline std::string_view to_string(Resolution r) noexcept {
    switch (r) {
        case Resolution::direct: return "direct";
        case Resolution::majority: return "majority";
        case Resolution::tie_extra_run: return "tie_extra_run";
        case Resolution::unresolved: return "unresolved";
    }
    return "unresolved";
}

[[nodiscard]] inline Resolution parse_resolution(std::string_view s) {
    if (s == "direct") return Resolution::direct;
    if (s == "majority") return Resolution::majority;
    if (s == "tie_extra_run") return Resolution::tie_extra_run;
    if (s == "unresolved") return Resolution::unresolved;
    throw ValidationError("unknown resolved flag '" + std::string{ s } + "'");
}

inline constexpr std::string_view human_annotator = "human";

struct AnnotationRecord {
    std::string instance_id;
    std::string annotator_id;
    std::string schema;
    /// 0 for aggregated or human records, 1.. for individual model runs
    int run = 0;
    /// empty iff resolved == unresolved
    std::string label;
    std::optional<std::string> rationale;
    Resolution resolved = Resolution::direct;

    [[nodiscard]] bool is_resolved() const noexcept { return resolved != Resolution::unresolved; }

    friend bool operator==(const AnnotationRecord &, const AnnotationRecord &) = default;
};

[[nodiscard]] inline nlohmann::ordered_json to_json(const AnnotationRecord &r) {
    nlohmann::ordered_json j;
    j["instance_id"] = r.instance_id;
    j["annotator_id"] = r.annotator_id;
    j["schema"] = r.schema;
    j["run"] = r.run;
    j["label"] = r.label;
    j["rationale"] = r.rationale ? nlohmann::ordered_json(*r.rationale) : nlohmann::ordered_json(nullptr);
    j["resolved"] = std::string{ to_string(r.resolved) };
    return j;
}

/// Parses and validates one record; the label is normalised to its declared spelling.
[[nodiscard]] inline AnnotationRecord parse_record(const nlohmann::ordered_json &j, const SchemaRegistry &schemas) {
    AnnotationRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.schema = j.at("schema").get<std::string>();
    r.run = j.at("run").get<int>();
    if (r.run < 0) {
        throw ValidationError("run must be >= 0");
    }
    r.label = j.contains("label") && !j["label"].is_null() ? j["label"].get<std::string>() : std::string{};
    if (j.contains("rationale") && !j["rationale"].is_null()) {
        r.rationale = j["rationale"].get<std::string>();
    }
    r.resolved = j.contains("resolved") ? parse_resolution(j["resolved"].get<std::string>()) : Resolution::direct;
    const auto &schema = schemas.get(r.schema);
    if (r.resolved == Resolution::unresolved) {
        if (!r.label.empty()) {
            throw ValidationError("unresolved record for '" + r.instance_id + "' carries a label");
        }
    } else {
        const auto resolved = schema.resolve(r.label);
        if (!resolved) {
            throw ValidationError("invalid " + r.schema + " label '" + r.label + "' for instance '" + r.instance_id + "'");
        }
        r.label = *resolved;
    }
    return r;
}

/// Loads an annotation JSONL file, enforcing (instance, annotator, schema, run) uniqueness.
[[nodiscard]] inline std::vector<AnnotationRecord> load_records(const std::string &path,
                                                               const SchemaRegistry &schemas = SchemaRegistry::builtin()) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path, 0, "cannot open annotation file");
    }
    std::vector<AnnotationRecord> out;
    std::set<std::tuple<std::string, std::string, std::string, int>> keys;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        AnnotationRecord r;
        try {
            r = parse_record(nlohmann::ordered_json::parse(line), schemas);
        } catch (const nlohmann::json::exception &e) {
            throw FormatError(path, lineno, std::string{ "malformed annotation record: " } + e.what());
        } catch (const Error &e) {
            throw FormatError(path, lineno, e.what());
        }
        if (!keys.emplace(r.instance_id, r.annotator_id, r.schema, r.run).second) {
            throw FormatError(path, lineno, "duplicate record for instance '" + r.instance_id + "' run " +
                                                std::to_string(r.run));
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_records(std::ostream &out, const std::vector<AnnotationRecord> &records) {
    for (const auto &r : records) {
        out << to_json(r).dump() << '\n';
    }
}

}  // namespace citeframe
