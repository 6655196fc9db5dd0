#pragma once

// Label schemas for citation annotation: the two-dimensional intent/content
// schemas plus the ACL-ARC and SciCite baselines, and the mapping between the
// latter two.

#include "citeframe/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace citeframe {

enum class Dimension { intent, content };

[[nodiscard]] inline std::string_view to_string(Dimension d) noexcept {
    return d == Dimension::intent ? "intent" : "content";
}

struct LabelDef {
    std::string id;
    std::string display_name;
    std::string definition;
    std::vector<std::string> decision_rules;

    friend bool operator==(const LabelDef &, const LabelDef &) = default;
};

/// Lowercases and drops every non-alphanumeric character, so that
/// "Evaluate against", "evaluate_against" and "EvaluateAgainst" compare equal.
[[nodiscard]] inline std::string canonicalize_label(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (const unsigned char c : raw) {
        if (std::isalnum(c)) {
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return out;
}

/// A closed, ordered label set. Label order drives confusion matrix layout.
class LabelSchema {
  public:
    LabelSchema() = default;

    LabelSchema(std::string name, Dimension dimension, std::vector<LabelDef> labels)
        : name_(std::move(name)), dimension_(dimension), labels_(std::move(labels)) {
        if (name_.empty()) {
            throw ValidationError("schema name must not be empty");
        }
        std::map<std::string, std::string> seen;
        for (const auto &label : labels_) {
            if (label.id.empty()) {
                throw ValidationError("schema '" + name_ + "': empty label id");
            }
            if (label.definition.empty()) {
                throw ValidationError("schema '" + name_ + "': label '" + label.id + "' has no definition");
            }
            const auto key = canonicalize_label(label.id);
            if (key.empty()) {
                throw ValidationError("schema '" + name_ + "': label '" + label.id + "' has no alphanumeric characters");
            }
            if (const auto [it, inserted] = seen.emplace(key, label.id); !inserted) {
                throw ValidationError("schema '" + name_ + "': labels '" + it->second + "' and '" + label.id +
                                      "' collide after canonicalization");
            }
        }
    }

    [[nodiscard]] const std::string &name() const noexcept { return name_; }
    [[nodiscard]] Dimension dimension() const noexcept { return dimension_; }
    [[nodiscard]] const std::vector<LabelDef> &labels() const noexcept { return labels_; }
    [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }

    /// Position of `label` (after canonicalization) in declared order.
    [[nodiscard]] std::optional<std::size_t> index_of(std::string_view label) const {
        const auto key = canonicalize_label(label);
        if (key.empty()) {
            return std::nullopt;
        }
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (canonicalize_label(labels_[i].id) == key) {
                return i;
            }
        }
        return std::nullopt;
    }

    /// The declared spelling of `label`, if it belongs to this schema.
    [[nodiscard]] std::optional<std::string> resolve(std::string_view label) const {
        if (const auto idx = index_of(label)) {
            return labels_[*idx].id;
        }
        return std::nullopt;
    }

    [[nodiscard]] const LabelDef &label(std::size_t idx) const { return labels_.at(idx); }

    friend bool operator==(const LabelSchema &, const LabelSchema &) = default;

  private:
    std::string name_;
    Dimension dimension_{ Dimension::intent };
    std::vector<LabelDef> labels_;
};

[[nodiscard]] inline bool validate_label(const LabelSchema &schema, std::string_view label) {
    return schema.index_of(label).has_value();
}

[[nodiscard]] inline std::vector<std::string> list_labels(const LabelSchema &schema) {
    std::vector<std::string> ids;
    ids.reserve(schema.size());
    for (const auto &l : schema.labels()) {
        ids.push_back(l.id);
    }
    return ids;
}

inline constexpr std::string_view soft_intent_schema = "soft-intent";
inline constexpr std::string_view soft_content_schema = "soft-content";
inline constexpr std::string_view acl_arc_schema = "acl-arc";
inline constexpr std::string_view scicite_schema = "scicite";

namespace detail {

inline LabelSchema make_soft_intent() {
    return LabelSchema{
        std::string{ soft_intent_schema },
        Dimension::intent,
        {
            { "Contextualize", "Contextualize",
              "The cited work is brought in as background: prior research, related contributions, or an illustration of the field.",
              { "No design decision and no reuse of the cited content is involved.",
                "Citing a model or resource without applying it is Contextualize." } },
            { "SignalGap", "Signal Gap",
              "The citation points to an open question or an unresolved problem.",
              { "The gap may be stated by the cited work or by the citing work.",
                "The citing author does not need to commit to solving it." } },
            { "HighlightLimitation", "Highlight Limitation",
              "A flaw, constraint or drawback of the cited method or result is identified, by the citing or the cited work.",
              { "Applies only when the cited contribution is explicitly critiqued." } },
            { "JustifyDesignChoice", "Justify Design Choice",
              "The citing work backs one of its own design or methodological decisions by pointing to the cited work.",
              { "Direct reuse is not required, but the author must commit to the choice.",
                "Does not apply to hypothetical actions such as \"we could follow ...\"." } },
            { "Use", "Use",
              "The citing work directly applies a reusable contribution of the cited work, such as a model, process, setting or definition.",
              { "The citing author must be the actor; \"[cited work] used ...\" does not qualify.",
                "Only past or present-tense application counts; plans and hypothetical uses are not Use." } },
            { "Modify", "Modify",
              "The citing work changes or extends a reusable contribution of the cited work, e.g. adapting a configuration, changing an algorithm, or integrating it into a new pipeline.",
              { "Covers extension, reduction, replacement and novel combination." } },
            { "EvaluateAgainst", "Evaluate Against",
              "The citing work compares its own findings or results with those of the cited work, typically to establish effectiveness.",
              { "The comparison must be explicit and involve the citing work's own results." } },
        }
    };
}

inline LabelSchema make_soft_content() {
    return LabelSchema{
        std::string{ soft_content_schema },
        Dimension::content,
        {
            { "PerformedWork", "Performed Work",
              "What the cited work did, e.g. an experimental process or a pipeline design, without singling out an outcome or a reusable resource.",
              {} },
            { "Discovery", "Discovery",
              "Observations, findings or theoretical conclusions reached by the cited work.",
              {} },
            { "ProducedResource", "Produced Resource",
              "A reusable output of the cited work: dataset, algorithm, model, tool, metric, standardized setting and the like.",
              {} },
        }
    };
}

inline LabelSchema make_acl_arc() {
    return LabelSchema{
        std::string{ acl_arc_schema },
        Dimension::intent,
        {
            { "Background", "Background",
              "The cited work provides relevant background information for the domain of the citing paper.", {} },
            { "ComparisonContrast", "Comparison or Contrast",
              "The citing paper expresses similarities to or differences from the cited work.", {} },
            { "Motivation", "Motivation",
              "The cited work illustrates the need for the data, goals or methods of the citing paper.", {} },
            { "Uses", "Uses",
              "The citing paper uses data, methods or other artifacts from the cited work.", {} },
            { "Extension", "Extension",
              "The citing paper extends the data, methods or other artifacts of the cited work.", {} },
            { "Future", "Future",
              "The cited work is presented as a potential avenue for future work.", {} },
        }
    };
}

inline LabelSchema make_scicite() {
    return LabelSchema{
        std::string{ scicite_schema },
        Dimension::intent,
        {
            { "Background", "Background",
              "The citation states, mentions or points to background information about a problem, concept, approach or topic.",
              { "Motivation, extension and future-work citations are treated as background." } },
            { "Method", "Method",
              "The citing paper makes use of a method, tool, approach or dataset from the cited work.", {} },
            { "ResultComparison", "Result Comparison",
              "The citing paper compares its results or findings with those of the cited work.", {} },
        }
    };
}

}  // namespace detail

[[nodiscard]] inline std::vector<std::string> builtin_schema_names() {
    return { std::string{ soft_intent_schema }, std::string{ soft_content_schema }, std::string{ acl_arc_schema },
             std::string{ scicite_schema } };
}

/// One of the four shipped schemas. Throws UnknownSchemaError for anything else.
[[nodiscard]] inline LabelSchema builtin_schema(std::string_view name) {
    if (name == soft_intent_schema) {
        return detail::make_soft_intent();
    }
    if (name == soft_content_schema) {
        return detail::make_soft_content();
    }
    if (name == acl_arc_schema) {
        return detail::make_acl_arc();
    }
    if (name == scicite_schema) {
        return detail::make_scicite();
    }
    throw UnknownSchemaError(std::string{ name });
}

/// Total function from the labels of one schema to the labels of another.
class SchemaMapping {
  public:
    SchemaMapping(const LabelSchema &source, const LabelSchema &target,
                  std::vector<std::pair<std::string, std::string>> pairs)
        : source_(source), target_(target.name()), pairs_(std::move(pairs)) {
        std::vector<bool> covered(source.size(), false);
        for (auto &[from, to] : pairs_) {
            const auto idx = source.index_of(from);
            if (!idx) {
                throw ValidationError("mapping " + source.name() + "->" + target.name() + ": '" + from +
                                      "' is not a " + source.name() + " label");
            }
            if (covered[*idx]) {
                throw ValidationError("mapping " + source.name() + "->" + target.name() + ": '" + from +
                                      "' mapped twice");
            }
            covered[*idx] = true;
            const auto resolved = target.resolve(to);
            if (!resolved) {
                throw ValidationError("mapping " + source.name() + "->" + target.name() + ": '" + to +
                                      "' is not a " + target.name() + " label");
            }
            from = source.label(*idx).id;
            to = *resolved;
        }
        if (const auto it = std::find(covered.begin(), covered.end(), false); it != covered.end()) {
            throw ValidationError("mapping " + source.name() + "->" + target.name() + " is not total: '" +
                                  source.label(static_cast<std::size_t>(it - covered.begin())).id + "' unmapped");
        }
    }

    [[nodiscard]] const std::string &source() const noexcept { return source_.name(); }
    [[nodiscard]] const std::string &target() const noexcept { return target_; }
    [[nodiscard]] const std::vector<std::pair<std::string, std::string>> &pairs() const noexcept { return pairs_; }
    [[nodiscard]] const LabelSchema &source_schema() const noexcept { return source_; }

  private:
    LabelSchema source_;
    std::string target_;
    std::vector<std::pair<std::string, std::string>> pairs_;
};

/// Maps `label` through `mapping`; throws ValidationError when it is not a source label.
[[nodiscard]] inline std::string map_label(const SchemaMapping &mapping, std::string_view label) {
    const auto key = canonicalize_label(label);
    for (const auto &[from, to] : mapping.pairs()) {
        if (!key.empty() && canonicalize_label(from) == key) {
            return to;
        }
    }
    throw ValidationError("'" + std::string{ label } + "' is not a valid " + mapping.source() + " label");
}

/// ACL-ARC to SciCite: Uses becomes Method, ComparisonContrast becomes
/// ResultComparison, everything else collapses into Background.
[[nodiscard]] inline SchemaMapping acl_arc_to_scicite() {
    return SchemaMapping{ builtin_schema(acl_arc_schema),
                          builtin_schema(scicite_schema),
                          {
                              { "Background", "Background" },
                              { "ComparisonContrast", "ResultComparison" },
                              { "Motivation", "Background" },
                              { "Uses", "Method" },
                              { "Extension", "Background" },
                              { "Future", "Background" },
                          } };
}

/// Only acl-arc -> scicite is built in.
[[nodiscard]] inline SchemaMapping builtin_mapping(std::string_view source, std::string_view target) {
    if (source == acl_arc_schema && target == scicite_schema) {
        return acl_arc_to_scicite();
    }
    throw ValidationError("no built-in mapping from '" + std::string{ source } + "' to '" + std::string{ target } + "'");
}

/// Schemas visible to a run: the built-ins, optionally overridden or extended
/// from a label-per-line JSONL file.
class SchemaRegistry {
  public:
    [[nodiscard]] static SchemaRegistry builtin() {
        SchemaRegistry reg;
        for (const auto &name : builtin_schema_names()) {
            reg.schemas_.emplace(name, builtin_schema(name));
        }
        return reg;
    }

    [[nodiscard]] const LabelSchema &get(std::string_view name) const {
        const auto it = schemas_.find(std::string{ name });
        if (it == schemas_.end()) {
            throw UnknownSchemaError(std::string{ name });
        }
        return it->second;
    }

    [[nodiscard]] bool contains(std::string_view name) const { return schemas_.count(std::string{ name }) > 0; }

    /// Replaces built-in schemas in full or adds new ones. A built-in schema can
    /// be reworded but must keep exactly its label id set.
    void add_or_replace(LabelSchema schema) {
        if (const auto it = schemas_.find(schema.name()); it != schemas_.end() && is_builtin(schema.name())) {
            const auto &old = it->second;
            bool same = old.size() == schema.size();
            for (const auto &l : schema.labels()) {
                same = same && old.index_of(l.id).has_value();
            }
            if (!same) {
                throw ValidationError("override of built-in schema '" + schema.name() + "' must keep its label set");
            }
        }
        const std::string name = schema.name();
        schemas_.insert_or_assign(name, std::move(schema));
    }

    /// Reads an override file: one JSON object per line with `schema`, `id`,
    /// `display_name`, `definition`, `rules` and optionally `dimension`.
    void load_overrides(const std::string &path) {
        std::ifstream in(path);
        if (!in) {
            throw FormatError(path, 0, "cannot open schema file");
        }
        struct Pending {
            Dimension dimension{ Dimension::intent };
            std::vector<LabelDef> labels;
        };
        std::vector<std::pair<std::string, Pending>> pending;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            nlohmann::json rec;
            try {
                rec = nlohmann::json::parse(line);
                LabelDef def;
                const auto schema = rec.at("schema").get<std::string>();
                def.id = rec.at("id").get<std::string>();
                def.display_name = rec.value("display_name", def.id);
                def.definition = rec.at("definition").get<std::string>();
                if (rec.contains("rules") && !rec["rules"].is_null()) {
                    def.decision_rules = rec["rules"].get<std::vector<std::string>>();
                }
                auto it = std::find_if(pending.begin(), pending.end(), [&](const auto &p) { return p.first == schema; });
                if (it == pending.end()) {
                    Pending p;
                    if (contains(schema)) {
                        p.dimension = get(schema).dimension();
                    }
                    pending.emplace_back(schema, std::move(p));
                    it = std::prev(pending.end());
                }
                if (rec.contains("dimension")) {
                    const auto dim = rec["dimension"].get<std::string>();
                    if (dim != "intent" && dim != "content") {
                        throw FormatError(path, lineno, "dimension must be 'intent' or 'content'");
                    }
                    it->second.dimension = dim == "intent" ? Dimension::intent : Dimension::content;
                }
                it->second.labels.push_back(std::move(def));
            } catch (const nlohmann::json::exception &e) {
                throw FormatError(path, lineno, std::string{ "malformed schema record: " } + e.what());
            }
        }
        for (auto &[name, p] : pending) {
            try {
                add_or_replace(LabelSchema{ name, p.dimension, std::move(p.labels) });
            } catch (const ValidationError &e) {
                throw FormatError(path, 0, e.what());
            }
        }
    }

    [[nodiscard]] std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto &[k, v] : schemas_) {
            out.push_back(k);
        }
        return out;
    }

  private:
    [[nodiscard]] static bool is_builtin(const std::string &name) {
        const auto names = builtin_schema_names();
        return std::find(names.begin(), names.end(), name) != names.end();
    }

    std::map<std::string, LabelSchema> schemas_;
};

}  // namespace citeframe
