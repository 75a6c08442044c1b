#include "advgrid/keys.hpp"

#include <stdexcept>

namespace advgrid {

double minority_fraction(Balance b) {
    switch (b) {
        case Balance::B50: return 0.50;
        case Balance::B40: return 0.40;
        case Balance::B30: return 0.30;
        case Balance::B20: return 0.20;
    }
    throw std::logic_error("minority_fraction: bad balance enum");
}

std::string to_string(TaskId t) {
    switch (t) {
        case TaskId::Easy: return "easy";
        case TaskId::Medium: return "medium";
        case TaskId::Hard: return "hard";
    }
    throw std::logic_error("to_string: bad task enum");
}

std::string to_string(Source s) {
    return s == Source::A ? "a" : "b";
}

std::string to_string(Balance b) {
    switch (b) {
        case Balance::B50: return "b50";
        case Balance::B40: return "b40";
        case Balance::B30: return "b30";
        case Balance::B20: return "b20";
    }
    throw std::logic_error("to_string: bad balance enum");
}

std::string to_string(ArchId a) {
    switch (a) {
        case ArchId::Plain: return "plain";
        case ArchId::Residual: return "residual";
        case ArchId::Deep: return "deep";
    }
    throw std::logic_error("to_string: bad arch enum");
}

std::string to_string(StrategyId s) {
    switch (s) {
        case StrategyId::Base: return "base";
        case StrategyId::Fgsm: return "fgsm";
        case StrategyId::Pgd: return "pgd";
        case StrategyId::Ensemble: return "ensemble";
        case StrategyId::Surrogate: return "surrogate";
        case StrategyId::Curriculum: return "curriculum";
        case StrategyId::Adaptive: return "adaptive";
        case StrategyId::NonMathMix: return "nonmath_mix";
        case StrategyId::Gaussian: return "gaussian";
        case StrategyId::SaltPepper: return "salt_pepper";
    }
    throw std::logic_error("to_string: bad strategy enum");
}

TaskId parse_task(std::string_view text) {
    if (text == "easy") return TaskId::Easy;
    if (text == "medium") return TaskId::Medium;
    if (text == "hard") return TaskId::Hard;
    throw std::runtime_error("parse_task: unknown task '" + std::string(text) + "'");
}

Source parse_source(std::string_view text) {
    if (text == "a") return Source::A;
    if (text == "b") return Source::B;
    throw std::runtime_error("parse_source: unknown source '" + std::string(text) + "'");
}

Balance parse_balance(std::string_view text) {
    if (text == "b50") return Balance::B50;
    if (text == "b40") return Balance::B40;
    if (text == "b30") return Balance::B30;
    if (text == "b20") return Balance::B20;
    throw std::runtime_error("parse_balance: unknown balance '" + std::string(text) + "'");
}

ArchId parse_arch(std::string_view text) {
    if (text == "plain") return ArchId::Plain;
    if (text == "residual") return ArchId::Residual;
    if (text == "deep") return ArchId::Deep;
    throw std::runtime_error("parse_arch: unknown architecture '" + std::string(text) + "'");
}

StrategyId parse_strategy(std::string_view text) {
    if (text == "base") return StrategyId::Base;
    if (text == "fgsm") return StrategyId::Fgsm;
    if (text == "pgd") return StrategyId::Pgd;
    if (text == "ensemble") return StrategyId::Ensemble;
    if (text == "surrogate") return StrategyId::Surrogate;
    if (text == "curriculum") return StrategyId::Curriculum;
    if (text == "adaptive") return StrategyId::Adaptive;
    if (text == "nonmath_mix") return StrategyId::NonMathMix;
    if (text == "gaussian") return StrategyId::Gaussian;
    if (text == "salt_pepper") return StrategyId::SaltPepper;
    throw std::runtime_error("parse_strategy: unknown strategy '" + std::string(text) + "'");
}

std::string key_string(const DatasetKey& k) {
    return to_string(k.task) + "_" + to_string(k.source) + "_" + to_string(k.balance);
}

std::string key_string(const SourceModelKey& k) {
    return key_string(k.dataset) + "_" + to_string(k.arch);
}

std::string key_string(const ModelKey& k) {
    return key_string(k.dataset) + "_" + to_string(k.arch) + "_" + to_string(k.strategy);
}

std::uint64_t stable_hash(std::string_view text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view scope) {
    std::uint64_t h = stable_hash(scope);
    // splitmix64 finalizer over the combined value
    std::uint64_t z = h ^ (master + 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace advgrid
