#include "advgrid/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace advgrid {

namespace {

constexpr double kPi = 3.14159265358979323846;

const TaskSpec kTasks[] = {
    // id, minority, majority, difficulty, aspect ranges, noise
    {TaskId::Easy, "elongated", "compact", 1, 2.8, 3.6, 1.00, 1.35, 0.02},
    {TaskId::Medium, "elongated", "compact", 2, 2.0, 2.8, 1.10, 1.80, 0.04},
    {TaskId::Hard, "elongated", "compact", 3, 1.6, 2.4, 1.15, 2.05, 0.06},
};

struct Rgb {
    double r, g, b;
};

double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Renders one image. The two sources share label semantics (shape aspect
// ratio) but differ visibly in background and shape texture statistics.
Tensor render_image(TaskId task, Source source, int img_size, int label, std::mt19937_64& rng) {
    const TaskSpec& spec = task_spec(task);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double aspect =
        label == 0
            ? spec.minority_aspect_lo + unit(rng) * (spec.minority_aspect_hi - spec.minority_aspect_lo)
            : spec.majority_aspect_lo + unit(rng) * (spec.majority_aspect_hi - spec.majority_aspect_lo);

    const double s = img_size;
    const double cx = s / 2.0 + (unit(rng) - 0.5) * s / 4.0;
    const double cy = s / 2.0 + (unit(rng) - 0.5) * s / 4.0;
    const double theta = unit(rng) * kPi;
    const double radius = s * (0.16 + 0.05 * unit(rng));
    const double a = radius * std::sqrt(aspect);
    const double b = radius / std::sqrt(aspect);
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);

    Rgb shape_col{0.60 + 0.35 * unit(rng), 0.60 + 0.35 * unit(rng), 0.60 + 0.35 * unit(rng)};

    // Source-specific background parameters.
    Rgb bg_top, bg_bot;
    double stripe_phase = unit(rng) * 2.0 * kPi;
    double bg_wave_freq = 1.0 + unit(rng);
    std::vector<double> cell_jitter;
    int cell_px = 4;
    if (source == Source::A) {
        bg_top = {0.50 + 0.10 * unit(rng), 0.42 + 0.10 * unit(rng), 0.30 + 0.08 * unit(rng)};
        bg_bot = {0.62 + 0.10 * unit(rng), 0.55 + 0.10 * unit(rng), 0.40 + 0.08 * unit(rng)};
    } else {
        bg_top = {0.22 + 0.08 * unit(rng), 0.28 + 0.08 * unit(rng), 0.40 + 0.10 * unit(rng)};
        bg_bot = bg_top;
        const int cells = (img_size / cell_px + 2) * (img_size / cell_px + 2);
        cell_jitter.resize(cells);
        for (auto& j : cell_jitter) j = (unit(rng) - 0.5) * 0.10;
    }

    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    std::vector<double> data(static_cast<size_t>(3) * img_size * img_size);

    for (int i = 0; i < img_size; ++i) {
        for (int j = 0; j < img_size; ++j) {
            const double dx = j - cx, dy = i - cy;
            const double u = dx * cos_t + dy * sin_t;
            const double v = -dx * sin_t + dy * cos_t;
            const double q = (u / a) * (u / a) + (v / b) * (v / b);
            const double coverage = smoothstep01((1.18 - q) / 0.36);

            Rgb base;
            if (source == Source::A) {
                const double t = static_cast<double>(i) / (img_size - 1);
                const double wave =
                    0.05 * std::sin(2.0 * kPi * bg_wave_freq * j / img_size + stripe_phase);
                base = {bg_top.r + (bg_bot.r - bg_top.r) * t + wave,
                        bg_top.g + (bg_bot.g - bg_top.g) * t + wave,
                        bg_top.b + (bg_bot.b - bg_top.b) * t + wave};
            } else {
                const int ci = i / cell_px, cj = j / cell_px;
                const double check = ((ci + cj) % 2 == 0) ? 1.0 : 0.80;
                const double jit = cell_jitter[ci * (img_size / cell_px + 2) + cj];
                base = {bg_top.r * check + jit, bg_top.g * check + jit, bg_top.b * check + jit};
            }

            // Shape texture: stripes on source A, dots on source B.
            double mod;
            if (source == Source::A) {
                mod = 0.5 + 0.5 * std::sin(2.0 * kPi * v / 4.0 + stripe_phase);
            } else {
                mod = 0.5 + 0.5 * std::sin(2.0 * kPi * u / 4.5) * std::sin(2.0 * kPi * v / 4.5);
            }
            const Rgb fg{shape_col.r * (0.75 + 0.25 * mod), shape_col.g * (0.75 + 0.25 * mod),
                         shape_col.b * (0.75 + 0.25 * mod)};

            const double px[3] = {base.r + (fg.r - base.r) * coverage,
                                  base.g + (fg.g - base.g) * coverage,
                                  base.b + (fg.b - base.b) * coverage};
            for (int ch = 0; ch < 3; ++ch) {
                const size_t idx = (static_cast<size_t>(ch) * img_size + i) * img_size + j;
                data[idx] = clamp01(px[ch] + noise(rng));
            }
        }
    }
    return Tensor({3, img_size, img_size}, std::move(data));
}

LabeledImageSet take_indices(const LabeledImageSet& pool, const std::vector<int>& idx, Role role) {
    LabeledImageSet out;
    out.task = pool.task;
    out.source = pool.source;
    out.role = role;
    out.seed = pool.seed;
    out.images.reserve(idx.size());
    out.labels.reserve(idx.size());
    out.ids.reserve(idx.size());
    for (int i : idx) {
        out.images.push_back(pool.images[i]);
        out.labels.push_back(pool.labels[i]);
        out.ids.push_back(pool.ids[i]);
    }
    return out;
}

}  // namespace

std::string to_string(Role r) {
    switch (r) {
        case Role::Train: return "train";
        case Role::Val: return "val";
        case Role::Test: return "test";
    }
    throw std::logic_error("to_string: bad role enum");
}

const TaskSpec& task_spec(TaskId id) { return kTasks[static_cast<int>(id)]; }

double class_overlap(TaskId id) {
    const TaskSpec& t = task_spec(id);
    const double lo = std::max(t.minority_aspect_lo, t.majority_aspect_lo);
    const double hi = std::min(t.minority_aspect_hi, t.majority_aspect_hi);
    const double uni = std::max(t.minority_aspect_hi, t.majority_aspect_hi) -
                       std::min(t.minority_aspect_lo, t.majority_aspect_lo);
    // Signed: negative values measure the gap between the class ranges,
    // positive values the shared fraction.
    return (hi - lo) / uni;
}

int LabeledImageSet::count_label(int label) const {
    return static_cast<int>(std::count(labels.begin(), labels.end(), label));
}

LabeledImageSet generate(const DatasetKey& key, int n_per_class, int img_size,
                         std::uint64_t seed) {
    if (n_per_class < 50) throw std::runtime_error("generate: n_per_class must be >= 50");
    if (img_size < 16) throw std::runtime_error("generate: img_size must be >= 16");

    LabeledImageSet pool;
    pool.task = key.task;
    pool.source = key.source;
    pool.role = Role::Train;
    pool.seed = seed;

    const std::string scope =
        "img/" + to_string(key.task) + "/" + to_string(key.source) + "/";
    for (int label = 0; label < 2; ++label) {
        for (int i = 0; i < n_per_class; ++i) {
            const long long id = static_cast<long long>(label) * n_per_class + i;
            std::mt19937_64 rng(derive_seed(seed, scope + std::to_string(id)));
            pool.images.push_back(render_image(key.task, key.source, img_size, label, rng));
            pool.labels.push_back(label);
            pool.ids.push_back(id);
        }
    }
    return pool;
}

LabeledImageSet apply_balance(const LabeledImageSet& pool, Balance balance, std::uint64_t seed) {
    const int n_min = pool.count_label(0);
    const int n_maj = pool.count_label(1);
    if (n_min != n_maj) {
        throw std::runtime_error("apply_balance: pool is not balanced (" + std::to_string(n_min) +
                                 " vs " + std::to_string(n_maj) + ")");
    }
    if (balance == Balance::B50) return pool;

    const double f = minority_fraction(balance);
    const int target = static_cast<int>(std::floor(n_maj * f / (1.0 - f)));
    if (target < 1) throw std::runtime_error("apply_balance: resulting minority count < 1");

    std::vector<int> minority_idx;
    for (int i = 0; i < pool.size(); ++i)
        if (pool.labels[i] == 0) minority_idx.push_back(i);

    std::mt19937_64 rng(derive_seed(seed, "balance/" + to_string(balance)));
    std::shuffle(minority_idx.begin(), minority_idx.end(), rng);
    minority_idx.resize(target);
    std::sort(minority_idx.begin(), minority_idx.end());

    std::vector<int> keep = minority_idx;
    for (int i = 0; i < pool.size(); ++i)
        if (pool.labels[i] == 1) keep.push_back(i);
    std::sort(keep.begin(), keep.end());
    return take_indices(pool, keep, pool.role);
}

SplitBundle split(const LabeledImageSet& pool, double train_frac, double val_frac,
                  double test_frac, std::uint64_t seed) {
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw std::runtime_error("split: fractions must sum to 1");
    }
    std::vector<int> by_class[2];
    for (int i = 0; i < pool.size(); ++i) by_class[pool.labels[i]].push_back(i);

    std::vector<int> train_idx, val_idx, test_idx;
    for (int label = 0; label < 2; ++label) {
        auto& idx = by_class[label];
        const int n = static_cast<int>(idx.size());
        const int n_val = static_cast<int>(std::floor(n * val_frac));
        const int n_test = static_cast<int>(std::floor(n * test_frac));
        if (n_val < 10 || n_test < 10) {
            throw std::runtime_error("split: insufficient samples, need >= 10 per class in val "
                                     "and test, got val " +
                                     std::to_string(n_val) + " test " + std::to_string(n_test));
        }
        std::mt19937_64 rng(derive_seed(seed, "split/" + std::to_string(label)));
        std::shuffle(idx.begin(), idx.end(), rng);
        val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + n_val);
        test_idx.insert(test_idx.end(), idx.begin() + n_val, idx.begin() + n_val + n_test);
        train_idx.insert(train_idx.end(), idx.begin() + n_val + n_test, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    SplitBundle bundle;
    bundle.train = take_indices(pool, train_idx, Role::Train);
    bundle.val = take_indices(pool, val_idx, Role::Val);
    bundle.test = take_indices(pool, test_idx, Role::Test);
    return bundle;
}

void export_pool(const LabeledImageSet& pool, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["task"] = to_string(pool.task);
    manifest["source"] = to_string(pool.source);
    manifest["role"] = to_string(pool.role);
    manifest["seed"] = pool.seed;
    auto& entries = manifest["images"] = nlohmann::json::array();

    for (int i = 0; i < pool.size(); ++i) {
        const auto& shape = pool.images[i].shape();
        const int c = shape[0], h = shape[1], w = shape[2];
        if (c != 3) throw std::runtime_error("export_pool: expected 3-channel images");
        const std::string name = "img_" + std::to_string(pool.ids[i]) + ".ppm";
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("export_pool: cannot write " + name);
        out << "P6\n" << w << " " << h << "\n65535\n";
        const auto& v = pool.images[i].values();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    const double val = v[(static_cast<size_t>(ch) * h + y) * w + x];
                    const auto q = static_cast<unsigned>(std::lround(val * 65535.0));
                    out.put(static_cast<char>((q >> 8) & 0xff));
                    out.put(static_cast<char>(q & 0xff));
                }
        entries.push_back({{"id", pool.ids[i]}, {"label", pool.labels[i]}, {"file", name}});
    }
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

LabeledImageSet import_pool(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("import_pool: missing manifest.json in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);

    LabeledImageSet pool;
    pool.task = parse_task(manifest.at("task").get<std::string>());
    pool.source = parse_source(manifest.at("source").get<std::string>());
    pool.role = Role::Train;
    pool.seed = manifest.value("seed", 0ull);

    for (const auto& e : manifest.at("images")) {
        const std::string name = e.at("file").get<std::string>();
        std::ifstream in(dir / name, std::ios::binary);
        if (!in) throw std::runtime_error("import_pool: cannot read " + name);
        std::string magic;
        int w = 0, h = 0, maxval = 0;
        in >> magic >> w >> h >> maxval;
        if (magic != "P6" || maxval != 65535) {
            throw std::runtime_error("import_pool: " + name + " is not a 16-bit P6 file");
        }
        in.get();  // single whitespace after header
        std::vector<double> data(static_cast<size_t>(3) * h * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    const int hi = in.get(), lo = in.get();
                    if (hi < 0 || lo < 0) throw std::runtime_error("import_pool: truncated " + name);
                    data[(static_cast<size_t>(ch) * h + y) * w + x] =
                        static_cast<double>((hi << 8) | lo) / 65535.0;
                }
        pool.images.emplace_back(std::vector<int>{3, h, w}, std::move(data));
        pool.labels.push_back(e.at("label").get<int>());
        pool.ids.push_back(e.at("id").get<long long>());
    }
    return pool;
}

}  // namespace advgrid
