#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>

namespace advgrid {

// Grid coordinates. Three binary tasks of increasing difficulty, two data
// sources with different rendering statistics, four training-set balance
// levels, three architectures and ten training strategies.
enum class TaskId { Easy, Medium, Hard };
enum class Source { A, B };
enum class Balance { B50, B40, B30, B20 };
enum class ArchId { Plain, Residual, Deep };
enum class StrategyId {
    Base,
    Fgsm,
    Pgd,
    Ensemble,
    Surrogate,
    Curriculum,
    Adaptive,
    NonMathMix,
    Gaussian,
    SaltPepper,
};

constexpr int kNumTasks = 3;
constexpr int kNumSources = 2;
constexpr int kNumBalances = 4;
constexpr int kNumArchs = 3;
constexpr int kNumStrategies = 10;

/// Minority-class fraction encoded by a balance level (0.50 .. 0.20).
double minority_fraction(Balance b);

std::string to_string(TaskId t);
std::string to_string(Source s);
std::string to_string(Balance b);
std::string to_string(ArchId a);
std::string to_string(StrategyId s);

TaskId parse_task(std::string_view text);
Source parse_source(std::string_view text);
Balance parse_balance(std::string_view text);
ArchId parse_arch(std::string_view text);
StrategyId parse_strategy(std::string_view text);

/// Coordinates of one training dataset in the grid.
struct DatasetKey {
    TaskId task = TaskId::Easy;
    Source source = Source::A;
    Balance balance = Balance::B50;

    auto operator<=>(const DatasetKey&) const = default;
};

/// A baseline-trained model used to craft gradient attacks.
struct SourceModelKey {
    DatasetKey dataset;
    ArchId arch = ArchId::Plain;

    auto operator<=>(const SourceModelKey&) const = default;
};

/// One uniquely configured victim model in the population.
struct ModelKey {
    DatasetKey dataset;
    ArchId arch = ArchId::Plain;
    StrategyId strategy = StrategyId::Base;

    auto operator<=>(const ModelKey&) const = default;
};

std::string key_string(const DatasetKey& k);
std::string key_string(const SourceModelKey& k);
std::string key_string(const ModelKey& k);

/// FNV-1a over the bytes of `text`. Stable across runs and platforms.
std::uint64_t stable_hash(std::string_view text);

/// Deterministic per-scope seed: a pure function of (master seed, scope tag).
std::uint64_t derive_seed(std::uint64_t master, std::string_view scope);

}  // namespace advgrid
