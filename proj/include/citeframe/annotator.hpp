#pragma once

// Prompted annotation: render a schema-specific prompt per instance, parse
// "rationale + LABEL: <id>" responses, and aggregate repeated runs by strict
// majority vote.

#include "citeframe/corpus.hpp"
#include "citeframe/error.hpp"
#include "citeframe/llm_backend.hpp"
#include "citeframe/records.hpp"
#include "citeframe/schema.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace citeframe {

/// Placeholder value for missing titles and sections.
inline constexpr std::string_view missing_metadata = "unknown";

struct PromptTemplate {
    std::string schema;
    /// may contain {labels}; context placeholders are also honoured here
    std::string preamble;
    /// rendered once per label: {id} {display_name} {definition} {rules}
    std::string per_label_block;
    /// {context} {citing_title} {cited_title} {section}
    std::string context_block;
    std::string output_instructions;
};

namespace detail {

/// Single-pass substitution of `{name}` placeholders. Substituted text is
/// never rescanned, and unknown braces are copied through.
inline std::string render_placeholders(std::string_view pattern, const std::map<std::string, std::string, std::less<>> &values) {
    std::string out;
    out.reserve(pattern.size());
    std::size_t i = 0;
    while (i < pattern.size()) {
        if (pattern[i] == '{') {
            const auto close = pattern.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto name = pattern.substr(i + 1, close - i - 1);
                if (const auto it = values.find(name); it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(pattern[i]);
        ++i;
    }
    return out;
}

inline std::string output_instructions_for(const LabelSchema &schema) {
    std::string ids;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        ids += (i == 0 ? "" : ", ") + schema.label(i).id;
    }
    return "Answer in two parts. First write a short rationale explaining which definition and decision rules "
           "apply. Then, on the last line, write your decision exactly as\n"
           "LABEL: <id>\n"
           "where <id> is one of: " + ids + ".";
}

}  // namespace detail

/// The shipped template for one schema.
[[nodiscard]] inline PromptTemplate default_template(const LabelSchema &schema) {
    PromptTemplate t;
    t.schema = schema.name();
    const std::string task = schema.dimension() == Dimension::intent
                                 ? "Decide what the citing author is doing with the cited work in this citation context."
                                 : "Decide what kind of content of the cited work is being referenced in this citation context.";
    t.preamble = "You are annotating citations in scientific papers with the '" + schema.name() + "' label set. " + task +
                 " Choose exactly one label.\n\nLabels:\n{labels}\n";
    t.per_label_block = "- {id} ({display_name}): {definition}{rules}";
    t.context_block = "Citing paper title: {citing_title}\n"
                      "Cited paper title: {cited_title}\n"
                      "Section: {section}\n"
                      "Citation context:\n{context}\n";
    t.output_instructions = detail::output_instructions_for(schema);
    return t;
}

/// Loads a plain-text template with {context}, {citing_title}, {cited_title},
/// {section} and {labels} placeholders. The label block format and the
/// output instructions are the shipped ones.
[[nodiscard]] inline PromptTemplate load_template(const std::string &path, const LabelSchema &schema) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path, 0, "cannot open prompt template");
    }
    std::ostringstream text;
    text << in.rdbuf();
    auto t = default_template(schema);
    t.preamble = text.str();
    t.context_block.clear();
    if (t.preamble.find("{context}") == std::string::npos) {
        throw FormatError(path, 0, "prompt template has no {context} placeholder");
    }
    return t;
}

[[nodiscard]] inline std::string render_label_inventory(const PromptTemplate &tmpl, const LabelSchema &schema) {
    std::string out;
    for (const auto &label : schema.labels()) {
        std::string rules;
        for (const auto &r : label.decision_rules) {
            rules += "\n    Rule: " + r;
        }
        out += detail::render_placeholders(tmpl.per_label_block, { { "id", label.id },
                                                                   { "display_name", label.display_name },
                                                                   { "definition", label.definition },
                                                                   { "rules", rules } });
        out += '\n';
    }
    return out;
}

/// Deterministic prompt for one instance. The context is copied verbatim;
/// missing metadata renders as `unknown`.
[[nodiscard]] inline std::string build_prompt(const PromptTemplate &tmpl, const LabelSchema &schema,
                                              const CitationInstance &instance) {
    if (tmpl.schema != schema.name()) {
        throw ValidationError("template is for schema '" + tmpl.schema + "', not '" + schema.name() + "'");
    }
    const auto meta = [](const std::optional<std::string> &v) {
        return v && !v->empty() ? *v : std::string{ missing_metadata };
    };
    const std::map<std::string, std::string, std::less<>> values{
        { "labels", render_label_inventory(tmpl, schema) },
        { "context", instance.context },
        { "citing_title", meta(instance.citing_title) },
        { "cited_title", meta(instance.cited_title) },
        { "section", meta(instance.section) },
    };
    std::string body = tmpl.preamble;
    if (body.find("{labels}") == std::string::npos && tmpl.context_block.find("{labels}") == std::string::npos) {
        body += "\nLabels:\n{labels}\n";
    }
    if (!tmpl.context_block.empty()) {
        body += "\n" + tmpl.context_block;
    }
    auto out = detail::render_placeholders(body, values);
    out += "\n" + tmpl.output_instructions;
    return out;
}

struct ParsedResponse {
    std::string rationale;
    std::string label;
};

namespace detail {

/// If `line` is a decision marker, returns the text after it.
inline std::optional<std::string> label_marker_value(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) || line[i] == '*' || line[i] == '#' ||
                               line[i] == '>' || line[i] == '`' || line[i] == '_')) {
        ++i;
    }
    constexpr std::string_view marker = "label";
    if (line.size() - i < marker.size()) {
        return std::nullopt;
    }
    for (std::size_t k = 0; k < marker.size(); ++k) {
        if (std::tolower(static_cast<unsigned char>(line[i + k])) != marker[k]) {
            return std::nullopt;
        }
    }
    i += marker.size();
    while (i < line.size() && (line[i] == '*' || line[i] == ' ' || line[i] == '_')) {
        ++i;
    }
    if (i >= line.size() || line[i] != ':') {
        return std::nullopt;
    }
    auto value = trim(line.substr(i + 1));
    if (canonicalize_label(value).empty()) {
        return std::nullopt;
    }
    return value;
}

}  // namespace detail

/// The last `LABEL: <value>` line decides; everything before it is the rationale.
[[nodiscard]] inline ParsedResponse parse_response(const std::string &raw, const LabelSchema &schema) {
    std::vector<std::string_view> lines;
    std::string_view rest = raw;
    while (true) {
        const auto nl = rest.find('\n');
        lines.push_back(rest.substr(0, nl));
        if (nl == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(nl + 1);
    }
    for (std::size_t k = lines.size(); k-- > 0;) {
        const auto value = detail::label_marker_value(lines[k]);
        if (!value) {
            continue;
        }
        const auto resolved = schema.resolve(*value);
        if (!resolved) {
            throw ParseError(ParseError::Kind::label_not_in_schema, raw,
                             "LABEL value '" + *value + "' is not in schema '" + schema.name() + "'");
        }
        std::string rationale;
        for (std::size_t j = 0; j < k; ++j) {
            rationale += lines[j];
            rationale += '\n';
        }
        return { detail::trim(rationale), *resolved };
    }
    throw ParseError(ParseError::Kind::no_label, raw, "no 'LABEL: <id>' line in response");
}

struct VoteOutcome {
    std::optional<std::string> label;
    /// majority when a label holds more than half the votes, else unresolved
    Resolution resolved = Resolution::unresolved;
};

/// Strict-majority vote over valid (non-abstaining) votes.
[[nodiscard]] inline VoteOutcome majority_vote(std::span<const std::string> votes) {
    std::map<std::string_view, std::size_t> counts;
    for (const auto &v : votes) {
        ++counts[v];
    }
    for (const auto &[label, count] : counts) {
        if (2 * count > votes.size()) {
            return { std::string{ label }, Resolution::majority };
        }
    }
    return {};
}

[[nodiscard]] inline VoteOutcome majority_vote(const std::vector<std::string> &votes) {
    return majority_vote(std::span<const std::string>(votes));
}

struct BatchResult {
    /// per instance, in input order: aggregated record (run 0) then runs 1..n
    std::vector<AnnotationRecord> records;
    /// transport error that stopped the batch; records hold only finished instances
    std::optional<std::string> error;
    std::size_t instances_done = 0;
};

/// Runs the repeated-annotation protocol: `n_runs` completions per
/// instance, one extra run when valid votes have no strict majority, and an
/// unresolved aggregate if that still fails. Unparseable responses abstain.
[[nodiscard]] inline BatchResult annotate_batch(const std::vector<CitationInstance> &instances, const LabelSchema &schema,
                                                const PromptTemplate &tmpl, CompletionClient &client, int n_runs) {
    if (n_runs < 1) {
        throw ValidationError("n_runs must be >= 1");
    }
    struct RunOutcome {
        bool done = false;
        std::string raw;
        std::optional<ParsedResponse> parsed;
    };
    const auto n = instances.size();
    std::vector<std::string> prompts;
    prompts.reserve(n);
    for (const auto &inst : instances) {
        prompts.push_back(build_prompt(tmpl, schema, inst));
    }
    // outcomes[i][r - 1] for run r; the extra run, if any, sits at index n_runs
    std::vector<std::vector<RunOutcome>> outcomes(n, std::vector<RunOutcome>(static_cast<std::size_t>(n_runs) + 1));

    std::atomic<bool> aborted{ false };
    std::mutex error_mutex;
    std::optional<std::string> error;

    const auto run_tasks = [&](const std::vector<std::pair<std::size_t, int>> &tasks) {
        std::atomic<std::size_t> next{ 0 };
        const auto worker = [&] {
            while (!aborted.load()) {
                const auto t = next.fetch_add(1);
                if (t >= tasks.size()) {
                    return;
                }
                const auto [i, run] = tasks[t];
                try {
                    auto &slot = outcomes[i][static_cast<std::size_t>(run - 1)];
                    slot.raw = client.complete(prompts[i], run);
                    try {
                        slot.parsed = parse_response(slot.raw, schema);
                    } catch (const ParseError &) {
                        slot.parsed.reset();
                    }
                    slot.done = true;
                } catch (const std::exception &e) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = "instance '" + instances[i].id + "' run " + std::to_string(run) + ": " + e.what();
                    }
                    aborted.store(true);
                }
            }
        };
        const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(client.config().max_parallel), tasks.size());
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back(worker);
        }
    };

    const auto valid_votes = [&](std::size_t i, int runs) {
        std::vector<std::string> votes;
        for (int r = 0; r < runs; ++r) {
            const auto &o = outcomes[i][static_cast<std::size_t>(r)];
            if (o.parsed) {
                votes.push_back(o.parsed->label);
            }
        }
        return votes;
    };

    std::vector<std::pair<std::size_t, int>> tasks;
    for (std::size_t i = 0; i < n; ++i) {
        for (int r = 1; r <= n_runs; ++r) {
            tasks.emplace_back(i, r);
        }
    }
    run_tasks(tasks);

    std::vector<bool> needs_extra(n, false);
    tasks.clear();
    for (std::size_t i = 0; i < n; ++i) {
        const auto &row = outcomes[i];
        const bool complete = std::all_of(row.begin(), row.begin() + n_runs, [](const RunOutcome &o) { return o.done; });
        if (complete && !majority_vote(valid_votes(i, n_runs)).label) {
            needs_extra[i] = true;
            tasks.emplace_back(i, n_runs + 1);
        }
    }
    if (!aborted.load()) {
        run_tasks(tasks);
    }

    BatchResult result;
    result.error = error;
    const auto &annotator = client.config().model_name;
    for (std::size_t i = 0; i < n; ++i) {
        const int runs = needs_extra[i] ? n_runs + 1 : n_runs;
        const auto &row = outcomes[i];
        if (!std::all_of(row.begin(), row.begin() + runs, [](const RunOutcome &o) { return o.done; })) {
            continue;
        }
        AnnotationRecord agg;
        agg.instance_id = instances[i].id;
        agg.annotator_id = annotator;
        agg.schema = schema.name();
        agg.run = 0;
        const auto vote = majority_vote(valid_votes(i, runs));
        if (vote.label) {
            agg.label = *vote.label;
            agg.resolved = needs_extra[i] ? Resolution::tie_extra_run
                                          : (n_runs == 1 ? Resolution::direct : Resolution::majority);
        } else {
            agg.resolved = Resolution::unresolved;
        }
        result.records.push_back(std::move(agg));
        for (int r = 1; r <= runs; ++r) {
            const auto &o = row[static_cast<std::size_t>(r - 1)];
            AnnotationRecord rec;
            rec.instance_id = instances[i].id;
            rec.annotator_id = annotator;
            rec.schema = schema.name();
            rec.run = r;
            if (o.parsed) {
                rec.label = o.parsed->label;
                if (!o.parsed->rationale.empty()) {
                    rec.rationale = o.parsed->rationale;
                }
                rec.resolved = Resolution::direct;
            } else {
                rec.rationale = o.raw;
                rec.resolved = Resolution::unresolved;
            }
            result.records.push_back(std::move(rec));
        }
        ++result.instances_done;
    }
    return result;
}

}  // namespace citeframe
