#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advgrid/keys.hpp"

namespace advgrid {

/// Binary confusion counts. Class 0 (the minority class) is the positive
/// class throughout the project.
struct ConfusionCounts {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;

    long long total() const { return tp + fp + fn + tn; }
    double precision() const;
    double recall() const;
};

ConfusionCounts confusion_from(const std::vector<int>& labels, const std::vector<int>& preds,
                               int positive_class = 0);

/// F1 = 2 * precision * recall / (precision + recall); 0 when both are 0.
double f1(const ConfusionCounts& counts);

/// Attack success over the paired clean/adversarial evaluation of one cell.
struct ASRRecord {
    long long n_clean_correct = 0;
    long long n_flipped = 0;
    double asr = 0.0;
    int severity = 1;
};

/// Fraction of clean-correct samples that are misclassified after the
/// attack. Throws when no sample is clean-correct (ASR undefined).
ASRRecord asr(const std::vector<int>& clean_preds, const std::vector<int>& adv_preds,
              const std::vector<int>& labels);

/// Severity level 1..5; half-open bins of width 0.2, top bin closed at 1.
int severity(double asr_value);

/// Mitigation of an attack by a training strategy relative to the baseline.
/// amr is empty when asr_original == 0 (undefined, excluded from aggregates).
struct AMRRecord {
    double asr_original = 0.0;
    double asr_adv = 0.0;
    std::optional<double> amr;
};

/// AMR = (asr_original - asr_adv) / asr_original, capped below at -1.
AMRRecord amr(double asr_original, double asr_adv);

/// Attacker/victim agreement cases C1..C8 over the three match axes
/// (dataset source, architecture, balance). C1 = all match (pure white box),
/// C8 = none match (pure black box).
struct CaseLabel {
    int case_index = 1;  // 1..8
    bool source_match = true;
    bool arch_match = true;
    bool balance_match = true;

    std::string name() const;  // "c1".."c8"
};

CaseLabel classify_case(const DatasetKey& attacker_data, ArchId attacker_arch,
                        const DatasetKey& victim_data, ArchId victim_arch);

}  // namespace advgrid
