#include "doctest.h"

#include "plslab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace plslab;

namespace {

// A classifier whose output depends only on its bias.
ModelParams constant_model(std::size_t dim, std::size_t classes, std::vector<double> cls_bias,
                           std::vector<double> trn_bias)
{
    DenseLayer cls{Matrix(classes, dim), std::move(cls_bias)};
    DenseLayer trn{Matrix(classes, dim + classes), std::move(trn_bias)};
    return {Mlp({cls}), Mlp({trn})};
}

// Identity readout: with x = e_y the classifier logits are 50·e_y.
ModelParams one_hot_model(std::size_t classes)
{
    Matrix w(classes, classes);
    for (std::size_t c = 0; c < classes; ++c) {
        w(c, c) = 50.0;
    }
    DenseLayer cls{w, std::vector<double>(classes, 0.0)};
    DenseLayer trn{Matrix(classes, 2 * classes), std::vector<double>(classes, 0.0)};
    return {Mlp({cls}), Mlp({trn})};
}

Dataset labelled(std::vector<std::size_t> clean, std::size_t classes)
{
    Dataset ds;
    ds.num_classes = classes;
    ds.feature_dim = classes;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        std::vector<double> x(classes, 0.0);
        x[clean[i]] = 1.0;
        ds.samples.push_back({i, x, clean[i], clean[i]});
    }
    return ds;
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<MetricsRecord> some_records()
{
    std::vector<MetricsRecord> out;
    for (std::size_t e = 1; e <= 3; ++e) {
        out.push_back({e, 0.5 + 0.1 * e, 0.9, 1.25, 2.5, 0.0123456789, 1.0 / 3.0, -0.25, 1e-7 * e});
    }
    return out;
}

} // namespace

TEST_CASE("test accuracy")
{
    const auto ds = labelled({0, 1, 2, 3, 2, 1}, 4);
    CHECK(test_accuracy(one_hot_model(4), ds) == 1.0);

    SUBCASE("ties go to the lowest index")
    {
        const auto tie = constant_model(4, 4, {1.0, 1.0, 0.0, 0.0}, {0, 0, 0, 0});
        CHECK(test_accuracy(tie, labelled({0}, 4)) == 1.0);
        CHECK(test_accuracy(tie, labelled({1}, 4)) == 0.0);
    }
    SUBCASE("uniform classifier on a balanced set")
    {
        const auto blobs = gen_gaussian_blobs(10000, 4, 2, 2.0, 9);
        const auto flat = constant_model(2, 4, {0, 0, 0, 0}, {0, 0, 0, 0});
        CHECK(test_accuracy(flat, blobs) == doctest::Approx(0.25).epsilon(0.02 / 0.25));
    }
    SUBCASE("constant predictor scores its class frequency")
    {
        const auto blobs = inject_symmetric(gen_gaussian_blobs(997, 3, 2, 2.0, 4), 0.3, 4);
        for (std::size_t c = 0; c < 3; ++c) {
            std::vector<double> bias(3, 0.0);
            bias[c] = 5.0;
            std::size_t count = 0;
            for (const auto& s : blobs.samples) count += s.y_clean == c;
            CHECK(test_accuracy(constant_model(2, 3, bias, {0, 0, 0}), blobs) ==
                  static_cast<double>(count) / static_cast<double>(blobs.size()));
        }
    }
    CHECK_THROWS(test_accuracy(one_hot_model(4), Dataset{{}, 4, 4, {}}));
}

TEST_CASE("transition MSE")
{
    auto ds = labelled({0, 1, 2, 3}, 4);
    ds.noise_meta.kind = NoiseKind::symmetric;
    for (const auto& s : ds.samples) {
        ds.noise_meta.true_transition_rows.push_back(LabelDist::one_hot(4, s.y_clean));
    }
    const auto flat = constant_model(4, 4, {0, 0, 0, 0}, {0, 0, 0, 0});
    CHECK(transition_mse(flat, ds) == doctest::Approx(0.1875).epsilon(1e-12));

    // f with a zero weight matrix emits softmax(bias) for every sample.
    const std::vector<double> row{0.7, 0.1, 0.1, 0.1};
    std::vector<double> bias;
    for (double v : row) bias.push_back(std::log(v));
    const auto fixed = constant_model(4, 4, {0, 0, 0, 0}, bias);
    for (auto& r : ds.noise_meta.true_transition_rows) r = LabelDist(row);
    CHECK(transition_mse(fixed, ds) <= 1e-12);

    ds.noise_meta.true_transition_rows.front() = LabelDist::uniform(4);
    CHECK(transition_mse(fixed, ds) > 1e-12);

    ds.noise_meta.true_transition_rows.clear();
    CHECK_THROWS(transition_mse(fixed, ds));
}

TEST_CASE("uncertainty split by clean and noisy samples")
{
    Dataset ds = labelled({0, 1, 2, 3}, 10);
    ds.samples[2].y_noisy = 5;
    ds.samples[3].y_noisy = 6;

    std::vector<LabelDist> one_hot;
    for (const auto& s : ds.samples) one_hot.push_back(LabelDist::one_hot(10, s.y_noisy));
    auto u = split_uncertainty(one_hot, ds);
    CHECK(u.clean == 1.0);
    CHECK(u.noisy == 1.0);

    std::vector<LabelDist> mixed = one_hot;
    mixed[2] = mixed[3] = LabelDist::uniform(10);
    u = split_uncertainty(mixed, ds);
    CHECK(u.clean == 1.0);
    CHECK(u.noisy == 10.0);

    const auto all_clean = labelled({0, 1}, 3);
    const std::vector<LabelDist> priors{LabelDist::uniform(3), LabelDist::one_hot(3, 1)};
    u = split_uncertainty(priors, all_clean);
    CHECK(u.has_clean);
    CHECK_FALSE(u.has_noisy);
    CHECK(u.clean == 2.0);
}

TEST_CASE("metrics CSV")
{
    const auto dir = std::filesystem::temp_directory_path() / "plslab_metrics_test";
    std::filesystem::create_directories(dir);
    const auto records = some_records();

    export_csv(records, dir / "a.csv");
    export_csv(records, dir / "b.csv");
    const auto text = read_file(dir / "a.csv");
    CHECK(text == read_file(dir / "b.csv"));
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    CHECK(text.rfind("epoch,test_acc,coverage,unc_clean,unc_noisy,transition_mse,loss_ce,loss_pri,loss_kl\n", 0) == 0);
    CHECK(text.find("0.012346") != std::string::npos);

    const auto back = import_csv(dir / "a.csv");
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].epoch == records[i].epoch);
        CHECK(back[i].test_acc == doctest::Approx(records[i].test_acc).epsilon(1e-6));
        CHECK(std::abs(back[i].transition_mse - records[i].transition_mse) <= 5e-7);
        CHECK(std::abs(back[i].loss_ce - records[i].loss_ce) <= 5e-7);
        CHECK(std::abs(back[i].loss_kl - records[i].loss_kl) <= 5e-7);
    }

    CHECK_THROWS(export_csv(records, dir / "missing" / "x.csv"));
    std::filesystem::remove_all(dir);
}
