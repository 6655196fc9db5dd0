#pragma once

// Agreement and evaluation metrics: Cohen's kappa, confusion matrices,
// accuracy / per-class P, R, F1 / macro F1, and cross-domain F1 drops.

#include "citeframe/corpus.hpp"
#include "citeframe/error.hpp"
#include "citeframe/format.hpp"
#include "citeframe/records.hpp"
#include "citeframe/schema.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace citeframe {

struct KappaResult {
    double kappa = 0.0;
    /// observed agreement
    double p_o = 0.0;
    /// chance agreement
    double p_e = 0.0;
    std::size_t n = 0;
};

/// Cohen's kappa for two raters over position-paired labels. The chance term
/// sums the product of both raters' marginals over the union alphabet. When
/// both raters use one and the same label throughout (p_e == 1), kappa is 1.
template <typename Label>
[[nodiscard]] KappaResult cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
    if (a.size() != b.size()) {
        throw ValidationError("cohen_kappa: sequences differ in length (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    if (a.empty()) {
        throw ValidationError("cohen_kappa: empty input");
    }
    // map every label to a dense index, then count marginals
    std::map<Label, std::size_t> index;
    const auto idx = [&index](const Label &l) { return index.try_emplace(l, index.size()).first->second; };
    std::vector<std::size_t> ia(a.size());
    std::vector<std::size_t> ib(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ia[i] = idx(a[i]);
        ib[i] = idx(b[i]);
    }
    std::vector<std::size_t> count_a(index.size(), 0);
    std::vector<std::size_t> count_b(index.size(), 0);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++count_a[ia[i]];
        ++count_b[ib[i]];
        agree += ia[i] == ib[i] ? 1 : 0;
    }
    const auto n = static_cast<double>(a.size());
    KappaResult r;
    r.n = a.size();
    r.p_o = static_cast<double>(agree) / n;
    // integer accumulation keeps p_e exact up to a single division
    std::uint64_t chance = 0;
    for (std::size_t k = 0; k < count_a.size(); ++k) {
        chance += static_cast<std::uint64_t>(count_a[k]) * count_b[k];
    }
    const auto n2 = static_cast<std::uint64_t>(a.size()) * a.size();
    r.p_e = static_cast<double>(chance) / static_cast<double>(n2);
    if (chance == n2) {
        r.kappa = 1.0;
    } else {
        r.kappa = (r.p_o - r.p_e) / (1.0 - r.p_e);
    }
    return r;
}

[[nodiscard]] inline KappaResult cohen_kappa(const std::vector<std::string> &a, const std::vector<std::string> &b) {
    return cohen_kappa<std::string>(std::span<const std::string>(a), std::span<const std::string>(b));
}

/// One annotator's labels over a shared instance list; nullopt = unresolved.
struct AnnotatorLabels {
    std::string annotator_id;
    std::vector<std::optional<std::string>> labels;
};

struct AgreementMatrix {
    /// annotators in output order (human last)
    std::vector<std::string> annotators;
    /// entries[i][j] for j < i; nullopt when the pair shares no resolved items
    std::vector<std::vector<std::optional<KappaResult>>> entries;

    [[nodiscard]] const std::optional<KappaResult> &at(std::size_t row, std::size_t col) const {
        if (col >= row) {
            throw std::out_of_range("agreement matrix is strictly lower triangular");
        }
        return entries.at(row).at(col);
    }
};

[[nodiscard]] inline bool is_human(std::string_view annotator_id) {
    return canonicalize_label(annotator_id) == human_annotator;
}

/// Pairwise kappa between every two annotators. Items unresolved for either
/// member of a pair are dropped for that pair only.
[[nodiscard]] inline AgreementMatrix agreement_matrix(std::vector<AnnotatorLabels> annotations) {
    if (annotations.size() < 2) {
        throw ValidationError("need at least two annotators");
    }
    const auto n_items = annotations.front().labels.size();
    for (const auto &a : annotations) {
        if (a.labels.size() != n_items) {
            throw ValidationError("annotator '" + a.annotator_id + "' is not aligned to the shared instance list");
        }
    }
    std::stable_partition(annotations.begin(), annotations.end(),
                          [](const AnnotatorLabels &a) { return !is_human(a.annotator_id); });
    AgreementMatrix m;
    for (const auto &a : annotations) {
        m.annotators.push_back(is_human(a.annotator_id) ? std::string{ "HUMAN" } : a.annotator_id);
    }
    m.entries.resize(annotations.size());
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        m.entries[i].resize(i);
        for (std::size_t j = 0; j < i; ++j) {
            std::vector<std::string> x;
            std::vector<std::string> y;
            for (std::size_t k = 0; k < n_items; ++k) {
                const auto &li = annotations[i].labels[k];
                const auto &lj = annotations[j].labels[k];
                if (li && lj) {
                    // column annotator first, matching the table's reading order
                    x.push_back(*lj);
                    y.push_back(*li);
                }
            }
            if (!x.empty()) {
                m.entries[i][j] = cohen_kappa(x, y);
            }
        }
    }
    return m;
}

class ConfusionMatrix {
  public:
    ConfusionMatrix() = default;

    explicit ConfusionMatrix(const LabelSchema &schema)
        : schema_(schema.name()), labels_(list_labels(schema)), counts_(schema.size() * schema.size(), 0) {}

    ConfusionMatrix(std::string schema, std::vector<std::string> labels)
        : schema_(std::move(schema)), labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

    [[nodiscard]] const std::string &schema() const noexcept { return schema_; }
    [[nodiscard]] const std::vector<std::string> &labels() const noexcept { return labels_; }
    [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }

    [[nodiscard]] std::uint64_t &at(std::size_t gold, std::size_t pred) { return counts_.at(gold * size() + pred); }
    [[nodiscard]] std::uint64_t at(std::size_t gold, std::size_t pred) const { return counts_.at(gold * size() + pred); }

    void add(std::size_t gold, std::size_t pred, std::uint64_t count = 1) { at(gold, pred) += count; }

    [[nodiscard]] std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto c : counts_) {
            t += c;
        }
        return t;
    }

    [[nodiscard]] std::uint64_t trace() const {
        std::uint64_t t = 0;
        for (std::size_t i = 0; i < size(); ++i) {
            t += at(i, i);
        }
        return t;
    }

    /// instances skipped for missing gold or unresolved/missing prediction
    std::size_t excluded = 0;

  private:
    std::string schema_;
    std::vector<std::string> labels_;
    std::vector<std::uint64_t> counts_;
};

/// Tallies (gold, predicted) over instances that have both a gold label for
/// the schema and a resolved prediction. Throws for predictions whose
/// instance id is not in `gold`.
[[nodiscard]] inline ConfusionMatrix confusion_matrix(const std::vector<CitationInstance> &gold,
                                                      const std::vector<AnnotationRecord> &predictions,
                                                      const LabelSchema &schema) {
    std::unordered_map<std::string_view, const CitationInstance *> by_id;
    for (const auto &inst : gold) {
        by_id.emplace(inst.id, &inst);
    }
    std::unordered_map<std::string_view, const AnnotationRecord *> pred_by_id;
    for (const auto &p : predictions) {
        if (by_id.count(p.instance_id) == 0) {
            throw ValidationError("prediction for unknown instance id '" + p.instance_id + "'");
        }
        if (p.schema != schema.name()) {
            throw ValidationError("prediction for '" + p.instance_id + "' is over schema '" + p.schema +
                                  "', expected '" + schema.name() + "'");
        }
        if (!pred_by_id.emplace(p.instance_id, &p).second) {
            throw ValidationError("more than one prediction for instance '" + p.instance_id + "'");
        }
    }
    ConfusionMatrix cm(schema);
    for (const auto &inst : gold) {
        const auto g = inst.gold_for(schema.name());
        const auto it = pred_by_id.find(inst.id);
        if (!g || it == pred_by_id.end() || !it->second->is_resolved()) {
            ++cm.excluded;
            continue;
        }
        const auto gi = schema.index_of(*g);
        const auto pi = schema.index_of(it->second->label);
        if (!gi || !pi) {
            throw ValidationError("label outside schema '" + schema.name() + "' for instance '" + inst.id + "'");
        }
        cm.add(*gi, *pi);
    }
    return cm;
}

/// Confusion matrix from position-paired label sequences.
[[nodiscard]] inline ConfusionMatrix confusion_matrix(const std::vector<std::string> &gold,
                                                      const std::vector<std::string> &pred, const LabelSchema &schema) {
    if (gold.size() != pred.size()) {
        throw ValidationError("gold and predicted sequences differ in length");
    }
    ConfusionMatrix cm(schema);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const auto gi = schema.index_of(gold[i]);
        const auto pi = schema.index_of(pred[i]);
        if (!gi || !pi) {
            throw ValidationError("label outside schema '" + schema.name() + "' at position " + std::to_string(i));
        }
        cm.add(*gi, *pi);
    }
    return cm;
}

enum class DomainTag { in_domain, cross_domain };

[[nodiscard]] inline std::string_view to_string(DomainTag t) noexcept {
    return t == DomainTag::in_domain ? "in_domain" : "cross_domain";
}

[[nodiscard]] inline DomainTag parse_domain_tag(std::string_view s) {
    if (s == "in_domain") return DomainTag::in_domain;
    if (s == "cross_domain") return DomainTag::cross_domain;
    throw ValidationError("domain tag must be 'in_domain' or 'cross_domain', got '" + std::string{ s } + "'");
}

struct ClassMetrics {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

struct EvalReport {
    std::string schema;
    std::string annotator_id;
    DomainTag domain_tag = DomainTag::in_domain;
    std::string dataset;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double macro_f1 = 0.0;
    std::uint64_t total = 0;
    std::size_t excluded = 0;
};

/// Per-class precision/recall/F1 (zero when a denominator is zero), accuracy
/// = trace/total, macro F1 over classes with gold support.
[[nodiscard]] inline EvalReport evaluate(const ConfusionMatrix &cm) {
    const auto total = cm.total();
    if (total == 0) {
        throw ValidationError("no scored instances");
    }
    EvalReport r;
    r.schema = cm.schema();
    r.total = total;
    r.excluded = cm.excluded;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    const auto k = cm.size();
    double f1_sum = 0.0;
    std::size_t supported = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::uint64_t row = 0;
        std::uint64_t col = 0;
        for (std::size_t o = 0; o < k; ++o) {
            row += cm.at(c, o);
            col += cm.at(o, c);
        }
        const auto tp = static_cast<double>(cm.at(c, c));
        ClassMetrics m;
        m.label = cm.labels()[c];
        m.support = row;
        m.precision = col == 0 ? 0.0 : tp / static_cast<double>(col);
        m.recall = row == 0 ? 0.0 : tp / static_cast<double>(row);
        m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
        if (row > 0) {
            f1_sum += m.f1;
            ++supported;
        }
        r.per_class.push_back(std::move(m));
    }
    r.macro_f1 = f1_sum / static_cast<double>(supported);
    return r;
}

enum class DropBucket { small, medium, large };

[[nodiscard]] inline std::string_view to_string(DropBucket b) noexcept {
    switch (b) {
        case DropBucket::small: return "small";
        case DropBucket::medium: return "medium";
        case DropBucket::large: return "large";
    }
    return "small";
}

/// <=20 small, 21..40 medium, >40 large; improvements (negative) are small.
[[nodiscard]] constexpr DropBucket drop_bucket(long percent) noexcept {
    if (percent <= 20) {
        return DropBucket::small;
    }
    return percent <= 40 ? DropBucket::medium : DropBucket::large;
}

struct DropResult {
    double in_f1 = 0.0;
    double cross_f1 = 0.0;
    /// 100 * (in - cross) / in, unrounded
    double drop_exact = 0.0;
    long drop_percent = 0;
    DropBucket bucket = DropBucket::small;
};

/// Relative macro-F1 loss from in-domain to cross-domain, as an integer percent.
[[nodiscard]] inline DropResult cross_domain_drop(double in_f1, double cross_f1) {
    if (!(in_f1 > 0.0)) {
        throw ValidationError("cross_domain_drop: in-domain F1 must be > 0 (drop undefined)");
    }
    if (in_f1 > 1.0 || cross_f1 < 0.0 || cross_f1 > 1.0) {
        throw ValidationError("cross_domain_drop: F1 values must lie in [0, 1]");
    }
    DropResult d;
    d.in_f1 = in_f1;
    d.cross_f1 = cross_f1;
    d.drop_exact = 100.0 * (in_f1 - cross_f1) / in_f1;
    d.drop_percent = static_cast<long>(round_half_away(d.drop_exact, 0));
    d.bucket = drop_bucket(d.drop_percent);
    return d;
}

/// Mean of the per-row integer drop percentages (the values a drop table
/// prints). Format with one decimal.
[[nodiscard]] inline double aggregate_drops(std::span<const DropResult> drops) {
    if (drops.empty()) {
        throw ValidationError("aggregate_drops: empty list");
    }
    double sum = 0.0;
    for (const auto &d : drops) {
        sum += static_cast<double>(d.drop_percent);
    }
    return sum / static_cast<double>(drops.size());
}

}  // namespace citeframe
