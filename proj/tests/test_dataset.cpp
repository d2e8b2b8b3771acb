#include "doctest.h"
#include "oracles.hpp"

#include "plslab/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace plslab;

namespace {

std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("plslab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<std::size_t> class_counts(const Dataset& ds)
{
    std::vector<std::size_t> counts(ds.num_classes, 0);
    for (const auto& s : ds.samples) {
        ++counts[s.y_clean];
    }
    return counts;
}

void check_injector_invariants(const Dataset& before, const Dataset& after)
{
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before.samples[i].x == after.samples[i].x);
        CHECK(before.samples[i].y_clean == after.samples[i].y_clean);
        const auto& row = after.noise_meta.true_transition_rows[i];
        CHECK(row.is_valid(1e-9));
        CHECK(row[after.samples[i].y_noisy] > 0.0);
    }
}

} // namespace

TEST_CASE("blobs are balanced and labelled cleanly")
{
    const auto ds = gen_gaussian_blobs(4, 2, 2, 5.0, 7);
    CHECK(ds.size() == 4);
    CHECK(class_counts(ds) == std::vector<std::size_t>{2, 2});
    for (const auto& s : ds.samples) {
        CHECK(s.y_noisy == s.y_clean);
        CHECK(ds.noise_meta.true_transition_rows[s.id] == LabelDist::one_hot(2, s.y_clean));
    }
    CHECK(ds.noise_meta.kind == NoiseKind::none);
    CHECK(ds.noise_meta.rate == 0.0);

    const auto odd = gen_gaussian_blobs(103, 4, 3, 1.0, 2);
    const auto counts = class_counts(odd);
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*hi - *lo <= 1);
}

TEST_CASE("blobs are linearly separable at large separation")
{
    const auto ds = gen_gaussian_blobs(100, 4, 2, 8.0, 1);
    CHECK(oracle::softmax_regression_accuracy(ds) > 0.95);
}

TEST_CASE("blob generation is deterministic")
{
    CHECK(gen_gaussian_blobs(50, 3, 4, 2.0, 1) == gen_gaussian_blobs(50, 3, 4, 2.0, 1));
    CHECK_FALSE(gen_gaussian_blobs(50, 3, 4, 2.0, 1) == gen_gaussian_blobs(50, 3, 4, 2.0, 2));
}

TEST_CASE("blob generation rejects bad arguments")
{
    CHECK_THROWS_AS(gen_gaussian_blobs(3, 4, 2, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_gaussian_blobs(10, 2, 0, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_gaussian_blobs(10, 2, 2, 0.0, 1), std::invalid_argument);
}

TEST_CASE("symmetric noise")
{
    const auto clean = gen_gaussian_blobs(10000, 4, 2, 2.0, 3);

    SUBCASE("zero rate is the identity on labels")
    {
        const auto ds = inject_symmetric(clean, 0.0, 1);
        for (const auto& s : ds.samples) {
            CHECK(s.y_noisy == s.y_clean);
        }
        check_injector_invariants(clean, ds);
    }
    SUBCASE("transition rows follow the closed form")
    {
        const auto ds = inject_symmetric(clean, 0.4, 1);
        const auto& s = ds.samples[0];
        const auto& row = ds.noise_meta.true_transition_rows[0];
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(row[c] == doctest::Approx(c == s.y_clean ? 0.6 : 0.4 / 3.0).epsilon(1e-12));
        }
        CHECK(std::abs(ds.flip_rate() - 0.4) <= 0.02);
        check_injector_invariants(clean, ds);
    }
    SUBCASE("rate outside [0, 1) is rejected")
    {
        CHECK_THROWS_AS(inject_symmetric(clean, 1.0, 1), std::invalid_argument);
        CHECK_THROWS_AS(inject_symmetric(clean, -0.1, 1), std::invalid_argument);
    }
}

TEST_CASE("asymmetric noise maps to the successor class")
{
    const auto clean = gen_gaussian_blobs(10000, 3, 2, 2.0, 4);
    const auto ds = inject_asymmetric(clean, 0.2, 9);
    check_injector_invariants(clean, ds);
    CHECK(std::abs(ds.flip_rate() - 0.2) <= 0.02);
    for (const auto& s : ds.samples) {
        if (s.y_noisy != s.y_clean) {
            CHECK(s.y_noisy == (s.y_clean + 1) % 3);
        }
        if (s.y_clean == 2) {
            const auto& row = ds.noise_meta.true_transition_rows[s.id];
            CHECK(row[0] == doctest::Approx(0.2));
            CHECK(row[1] == 0.0);
            CHECK(row[2] == doctest::Approx(0.8));
        }
    }
    const auto identity = inject_asymmetric(clean, 0.0, 9);
    CHECK(identity.flip_rate() == 0.0);
    CHECK_THROWS_AS(inject_asymmetric(clean, 1.5, 1), std::invalid_argument);
}

TEST_CASE("instance-dependent noise")
{
    const auto clean = gen_gaussian_blobs(10000, 4, 2, 2.0, 5);

    SUBCASE("zero rate leaves labels and one-hot rows")
    {
        const auto ds = inject_idn(clean, 0.0, 3);
        CHECK(ds.flip_rate() == 0.0);
        for (const auto& s : ds.samples) {
            CHECK(ds.noise_meta.true_transition_rows[s.id] == LabelDist::one_hot(4, s.y_clean));
        }
    }
    SUBCASE("flip rate and row construction")
    {
        const auto ds = inject_idn(clean, 0.4, 3);
        check_injector_invariants(clean, ds);
        CHECK(std::abs(ds.flip_rate() - 0.4) <= 0.05);
        // The clean entry carries 1 - q_i with q_i in [0, 1]; rows vary by instance.
        bool varies = false;
        const double first = ds.noise_meta.true_transition_rows[0][ds.samples[0].y_clean];
        for (const auto& s : ds.samples) {
            const double keep = ds.noise_meta.true_transition_rows[s.id][s.y_clean];
            CHECK(keep >= 0.0);
            CHECK(keep <= 1.0);
            varies = varies || keep != first;
        }
        CHECK(varies);
    }
    SUBCASE("deterministic under a fixed seed")
    {
        CHECK(inject_idn(clean, 0.3, 8) == inject_idn(clean, 0.3, 8));
    }
    CHECK_THROWS_AS(inject_idn(clean, 1.0, 1), std::invalid_argument);
}

TEST_CASE("csv round trip")
{
    const auto dir = scratch_dir("roundtrip");
    const auto ds = inject_idn(gen_gaussian_blobs(10, 3, 2, 1.5, 6), 0.3, 2);
    save_csv(ds, dir / "train.csv");
    CHECK(std::filesystem::exists(dir / "train.transition.csv"));
    CHECK(load_csv(dir / "train.csv") == ds);

    std::ifstream in(dir / "train.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "id,y_clean,y_noisy,x0,x1");
}

TEST_CASE("csv load errors name the line")
{
    const auto dir = scratch_dir("errors");
    const auto ds = gen_gaussian_blobs(4, 2, 2, 1.0, 1);
    save_csv(ds, dir / "d.csv");

    auto rewrite_line = [&](std::size_t lineno, const std::string& text) {
        std::ifstream in(dir / "d.csv");
        std::vector<std::string> lines;
        for (std::string l; std::getline(in, l);) {
            lines.push_back(l);
        }
        in.close();
        lines[lineno - 1] = text;
        std::ofstream out(dir / "d.csv");
        for (const auto& l : lines) {
            out << l << '\n';
        }
    };
    auto load_message = [&]() -> std::string {
        try {
            load_csv(dir / "d.csv");
        } catch (const DataError& e) {
            return e.what();
        }
        return {};
    };

    rewrite_line(3, "1,2,0,0.5,0.5");
    CHECK(load_message().find("d.csv:3:") != std::string::npos);

    save_csv(ds, dir / "d.csv");
    rewrite_line(4, "2,0,0,abc,0.5");
    CHECK(load_message().find("d.csv:4:") != std::string::npos);

    save_csv(ds, dir / "d.csv");
    rewrite_line(2, "0,0,0,0.5");
    CHECK(load_message().find("d.csv:2:") != std::string::npos);
}
