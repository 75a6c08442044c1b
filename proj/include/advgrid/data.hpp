#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advgrid/keys.hpp"
#include "advgrid/tensor.hpp"

namespace advgrid {

enum class Role { Train, Val, Test };

std::string to_string(Role r);

/// One of the three binary tasks. Class 0 (minority) renders as an elongated
/// blob, class 1 (majority) as a compact one; the aspect-ratio distributions
/// of the two classes overlap more as difficulty rises, and rendering noise
/// grows with it.
struct TaskSpec {
    TaskId id;
    std::string minority_class_name;
    std::string majority_class_name;
    int difficulty;  // 1..3, strictly increasing across tasks

    // Aspect-ratio ranges of the two class generators; their overlap is the
    // class-overlap parameter.
    double minority_aspect_lo, minority_aspect_hi;
    double majority_aspect_lo, majority_aspect_hi;
    double noise_sigma;
};

const TaskSpec& task_spec(TaskId id);

/// Signed class-overlap parameter: intersection width of the two aspect
/// ranges over their union; negative when the ranges are separated by a gap.
/// Strictly increasing across Easy -> Medium -> Hard.
double class_overlap(TaskId id);

/// Images in [0,1]^(C,H,W) with binary labels; ids stay unique across the
/// splits derived from one pool.
struct LabeledImageSet {
    TaskId task = TaskId::Easy;
    Source source = Source::A;
    Role role = Role::Train;
    std::uint64_t seed = 0;
    std::vector<Tensor> images;
    std::vector<int> labels;              // 0 = minority, 1 = majority
    std::vector<long long> ids;

    int size() const { return static_cast<int>(images.size()); }
    int count_label(int label) const;
};

struct SplitBundle {
    LabeledImageSet train;
    LabeledImageSet val;
    LabeledImageSet test;
};

/// Balanced master pool of 2*n_per_class images for (task, source). The pool
/// is a pure function of (task, source, n_per_class, img_size, seed); the
/// balance field of the key does not influence generation, so all balance
/// levels of one (task, source) share identical pools.
LabeledImageSet generate(const DatasetKey& key, int n_per_class, int img_size,
                         std::uint64_t seed);

/// Undersamples the minority class (class 0) of a balanced training split to
/// the requested level, keeping the majority class fixed. Minority count is
/// floor(majority * f / (1 - f)) with f the minority fraction.
LabeledImageSet apply_balance(const LabeledImageSet& pool, Balance balance, std::uint64_t seed);

/// Per-class stratified split with disjoint ids. Val and test take
/// floor(n * fraction) images per class, the remainder trains; since the
/// pool is balanced, val and test are exactly class-balanced.
SplitBundle split(const LabeledImageSet& pool, double train_frac, double val_frac,
                  double test_frac, std::uint64_t seed);

/// Writes the pool as one 16-bit binary PPM per image plus manifest.json
/// (id, label, role, source), so real datasets can replace the generators.
void export_pool(const LabeledImageSet& pool, const std::filesystem::path& dir);

LabeledImageSet import_pool(const std::filesystem::path& dir);

}  // namespace advgrid
