#include "advgrid/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace advgrid {

double ConfusionCounts::precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double ConfusionCounts::recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

ConfusionCounts confusion_from(const std::vector<int>& labels, const std::vector<int>& preds,
                               int positive_class) {
    if (labels.size() != preds.size()) {
        throw std::runtime_error("confusion_from: labels and predictions differ in length");
    }
    ConfusionCounts c;
    for (size_t i = 0; i < labels.size(); ++i) {
        const bool pos = labels[i] == positive_class;
        const bool pred_pos = preds[i] == positive_class;
        if (pos && pred_pos) ++c.tp;
        else if (!pos && pred_pos) ++c.fp;
        else if (pos && !pred_pos) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f1(const ConfusionCounts& c) {
    // Algebraically 2*p*r/(p+r), evaluated as a single division so the
    // result is the correctly rounded quotient of integer counts.
    const double denom = 2.0 * c.tp + c.fp + c.fn;
    if (denom == 0.0) return 0.0;  // precision + recall == 0
    if (c.tp == 0) return 0.0;
    return 2.0 * c.tp / denom;
}

ASRRecord asr(const std::vector<int>& clean_preds, const std::vector<int>& adv_preds,
              const std::vector<int>& labels) {
    if (clean_preds.size() != labels.size() || adv_preds.size() != labels.size()) {
        throw std::runtime_error("asr: prediction/label lengths differ");
    }
    ASRRecord r;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (clean_preds[i] != labels[i]) continue;  // never counted
        ++r.n_clean_correct;
        if (adv_preds[i] != labels[i]) ++r.n_flipped;
    }
    if (r.n_clean_correct == 0) {
        throw std::runtime_error("asr: undefined, no clean-correct samples");
    }
    r.asr = static_cast<double>(r.n_flipped) / static_cast<double>(r.n_clean_correct);
    r.severity = severity(r.asr);
    return r;
}

int severity(double asr_value) {
    if (!(asr_value >= 0.0 && asr_value <= 1.0)) {
        throw std::runtime_error("severity: asr out of [0,1]");
    }
    return std::min(5, static_cast<int>(std::floor(asr_value * 5.0)) + 1);
}

AMRRecord amr(double asr_original, double asr_adv) {
    if (!(asr_original >= 0.0 && asr_original <= 1.0) || !(asr_adv >= 0.0 && asr_adv <= 1.0)) {
        throw std::runtime_error("amr: asr values out of [0,1]");
    }
    AMRRecord r;
    r.asr_original = asr_original;
    r.asr_adv = asr_adv;
    if (asr_original == 0.0) return r;  // undefined, flagged by empty amr
    r.amr = std::max(-1.0, (asr_original - asr_adv) / asr_original);
    return r;
}

std::string CaseLabel::name() const { return "c" + std::to_string(case_index); }

CaseLabel classify_case(const DatasetKey& attacker_data, ArchId attacker_arch,
                        const DatasetKey& victim_data, ArchId victim_arch) {
    if (attacker_data.task != victim_data.task) {
        throw std::runtime_error("classify_case: attacker and victim are on different tasks");
    }
    CaseLabel label;
    label.source_match = attacker_data.source == victim_data.source;
    label.arch_match = attacker_arch == victim_arch;
    label.balance_match = attacker_data.balance == victim_data.balance;
    label.case_index = 1 + (label.source_match ? 0 : 4) + (label.arch_match ? 0 : 2) +
                       (label.balance_match ? 0 : 1);
    return label;
}

}  // namespace advgrid
