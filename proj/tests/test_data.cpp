#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "advgrid/data.hpp"

using namespace advgrid;

namespace {

bool identical(const LabeledImageSet& a, const LabeledImageSet& b) {
    if (a.size() != b.size() || a.labels != b.labels || a.ids != b.ids) return false;
    for (int i = 0; i < a.size(); ++i)
        if (a.images[i].values() != b.images[i].values()) return false;
    return true;
}

double pool_channel_mean(const LabeledImageSet& p) {
    double s = 0.0;
    long long n = 0;
    for (const auto& img : p.images) {
        for (double v : img.values()) s += v;
        n += img.size();
    }
    return s / n;
}

}  // namespace

TEST_CASE("three tasks with strictly increasing difficulty and overlap") {
    CHECK(task_spec(TaskId::Easy).difficulty == 1);
    CHECK(task_spec(TaskId::Medium).difficulty == 2);
    CHECK(task_spec(TaskId::Hard).difficulty == 3);
    CHECK(class_overlap(TaskId::Easy) < class_overlap(TaskId::Medium));
    CHECK(class_overlap(TaskId::Medium) < class_overlap(TaskId::Hard));
    CHECK(task_spec(TaskId::Easy).noise_sigma < task_spec(TaskId::Hard).noise_sigma);
}

TEST_CASE("generate is deterministic and sized correctly") {
    DatasetKey key{TaskId::Easy, Source::A, Balance::B50};
    auto p1 = generate(key, 50, 16, 1);
    auto p2 = generate(key, 50, 16, 1);
    CHECK(identical(p1, p2));
    CHECK(p1.size() == 100);
    CHECK(p1.count_label(0) == 50);
    CHECK(p1.count_label(1) == 50);

    // balance level must not influence the pool
    DatasetKey key_b20 = key;
    key_b20.balance = Balance::B20;
    CHECK(identical(p1, generate(key_b20, 50, 16, 1)));

    // pixels stay in range
    for (const auto& img : p1.images)
        for (double v : img.values()) CHECK((v >= 0.0 && v <= 1.0));

    CHECK_THROWS(generate(key, 10, 16, 1));
    CHECK_THROWS(generate(key, 50, 8, 1));
}

TEST_CASE("different seeds give different pools") {
    DatasetKey key{TaskId::Easy, Source::A, Balance::B50};
    auto p1 = generate(key, 50, 16, 1);
    auto p2 = generate(key, 50, 16, 2);
    CHECK_FALSE(identical(p1, p2));
}

TEST_CASE("sources render from visibly different distributions") {
    DatasetKey a{TaskId::Medium, Source::A, Balance::B50};
    DatasetKey b{TaskId::Medium, Source::B, Balance::B50};
    auto pa = generate(a, 50, 16, 3);
    auto pb = generate(b, 50, 16, 3);
    // aggregate per-pixel mean difference is clearly nonzero
    CHECK(std::abs(pool_channel_mean(pa) - pool_channel_mean(pb)) > 0.02);
}

TEST_CASE("split is stratified, disjoint, deterministic") {
    DatasetKey key{TaskId::Easy, Source::A, Balance::B50};
    auto pool = generate(key, 100, 16, 5);
    auto bundle = split(pool, 0.6, 0.2, 0.2, 5);

    CHECK(bundle.train.size() == 120);
    CHECK(bundle.val.size() == 40);
    CHECK(bundle.test.size() == 40);
    CHECK(bundle.val.count_label(0) == 20);
    CHECK(bundle.val.count_label(1) == 20);
    CHECK(bundle.test.count_label(0) == 20);
    CHECK(bundle.test.count_label(1) == 20);

    std::set<long long> train_ids(bundle.train.ids.begin(), bundle.train.ids.end());
    std::set<long long> val_ids(bundle.val.ids.begin(), bundle.val.ids.end());
    std::set<long long> test_ids(bundle.test.ids.begin(), bundle.test.ids.end());
    for (long long id : val_ids) CHECK(train_ids.count(id) == 0);
    for (long long id : test_ids) {
        CHECK(train_ids.count(id) == 0);
        CHECK(val_ids.count(id) == 0);
    }

    auto bundle2 = split(pool, 0.6, 0.2, 0.2, 5);
    CHECK(identical(bundle.train, bundle2.train));
    CHECK(identical(bundle.val, bundle2.val));
    CHECK(identical(bundle.test, bundle2.test));

    CHECK_THROWS(split(pool, 0.5, 0.2, 0.2, 5));    // fractions don't sum to 1
    CHECK_THROWS(split(pool, 0.9, 0.05, 0.05, 5));  // < 10 per class in val/test
}

TEST_CASE("apply_balance undersamples the minority only") {
    LabeledImageSet pool;
    pool.task = TaskId::Easy;
    pool.source = Source::A;
    pool.role = Role::Train;
    // tiny 1x1x1 stand-in images keep this cheap at the paper-scale counts
    for (int label = 0; label < 2; ++label)
        for (int i = 0; i < 3500; ++i) {
            pool.images.push_back(Tensor({1, 1, 1}, {0.5}));
            pool.labels.push_back(label);
            pool.ids.push_back(label * 3500 + i);
        }

    SUBCASE("strong imbalance worked example: 3500 majority -> 875 minority") {
        auto out = apply_balance(pool, Balance::B20, 9);
        CHECK(out.count_label(1) == 3500);
        CHECK(out.count_label(0) == 875);
    }
    SUBCASE("b40: 600 majority -> 400 minority") {
        LabeledImageSet small;
        small.role = Role::Train;
        for (int label = 0; label < 2; ++label)
            for (int i = 0; i < 600; ++i) {
                small.images.push_back(Tensor({1, 1, 1}, {0.5}));
                small.labels.push_back(label);
                small.ids.push_back(label * 600 + i);
            }
        auto out = apply_balance(small, Balance::B40, 9);
        CHECK(out.count_label(1) == 600);
        CHECK(out.count_label(0) == 400);
    }
    SUBCASE("b50 is the identity") {
        auto out = apply_balance(pool, Balance::B50, 9);
        CHECK(identical(out, pool));
    }
    SUBCASE("deterministic draw") {
        auto o1 = apply_balance(pool, Balance::B30, 4);
        auto o2 = apply_balance(pool, Balance::B30, 4);
        CHECK(identical(o1, o2));
        CHECK(o1.count_label(0) == 1500);
    }
    SUBCASE("unbalanced pool rejected") {
        auto unbalanced = apply_balance(pool, Balance::B20, 1);
        CHECK_THROWS(apply_balance(unbalanced, Balance::B20, 1));
    }
}

TEST_CASE("balance levels hit their minority fraction within one image") {
    DatasetKey key{TaskId::Easy, Source::A, Balance::B50};
    auto pool = generate(key, 60, 16, 2);
    auto bundle = split(pool, 0.6, 0.2, 0.2, 2);
    for (Balance b : {Balance::B50, Balance::B40, Balance::B30, Balance::B20}) {
        auto train = apply_balance(bundle.train, b, 2);
        const double f = minority_fraction(b);
        const int maj = train.count_label(1);
        const int mi = train.count_label(0);
        const double target = maj * f / (1.0 - f);
        CHECK(std::abs(mi - target) <= 1.0);
    }
}

TEST_CASE("export and import round-trip within quantization") {
    DatasetKey key{TaskId::Hard, Source::B, Balance::B50};
    auto pool = generate(key, 50, 16, 8);
    LabeledImageSet small;
    small.task = pool.task;
    small.source = pool.source;
    small.role = pool.role;
    for (int i = 0; i < 4; ++i) {
        small.images.push_back(pool.images[i]);
        small.labels.push_back(pool.labels[i]);
        small.ids.push_back(pool.ids[i]);
    }

    auto dir = std::filesystem::temp_directory_path() / "advgrid_pool_test";
    std::filesystem::remove_all(dir);
    export_pool(small, dir);
    auto loaded = import_pool(dir);

    REQUIRE(loaded.size() == small.size());
    CHECK(loaded.labels == small.labels);
    CHECK(loaded.ids == small.ids);
    for (int i = 0; i < small.size(); ++i) {
        const auto& a = small.images[i].values();
        const auto& b = loaded.images[i].values();
        REQUIRE(a.size() == b.size());
        for (size_t j = 0; j < a.size(); ++j) CHECK(std::abs(a[j] - b[j]) <= 1.0 / 65535.0);
    }
    std::filesystem::remove_all(dir);
}
