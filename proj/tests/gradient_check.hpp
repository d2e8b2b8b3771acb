#pragma once

#include "oracles.hpp"

#include "plslab/objective.hpp"
#include "plslab/pls.hpp"

#include <string>
#include <vector>

namespace plslab::testing {

struct NamedTerms {
    std::string name;
    LossTerms terms;
};

inline std::vector<NamedTerms> single_terms()
{
    std::vector<NamedTerms> out;
    LossTerms t;
    t.transition_ce = true;
    out.push_back({"transition_ce", t});
    t = {};
    t.pri = PriTerm::forward;
    out.push_back({"pri_forward", t});
    t = {};
    t.pri = PriTerm::reversed;
    out.push_back({"pri_reversed", t});
    t = {};
    t.estep = EstepTerm::x_given_y;
    out.push_back({"estep_x_given_y", t});
    t = {};
    t.estep = EstepTerm::y_given_x;
    out.push_back({"estep_y_given_x", t});
    t = {};
    t.pri = PriTerm::ce_pri;
    out.push_back({"ce_pri", t});
    t = {};
    t.classifier_ce = true;
    out.push_back({"classifier_ce", t});
    t = {};
    t.transition_ce = true;
    t.pri = PriTerm::reversed;
    t.estep = EstepTerm::x_given_y;
    out.push_back({"total_x_given_y", t});
    t.estep = EstepTerm::y_given_x;
    t.pri = PriTerm::forward;
    out.push_back({"total_y_given_x", t});
    return out;
}

struct GradientInstance {
    Dataset data;
    ModelParams params;
    Batch batch;
    std::vector<std::vector<std::size_t>> draws;
};

// Randomised small problem: |Y| in {2,3,4}, d = 8, one hidden layer of 4
// units per network, a batch of 6 with PLS-style priors.
inline GradientInstance make_gradient_instance(std::uint64_t seed, std::size_t K = 2)
{
    Rng rng(seed);
    GradientInstance inst;
    const std::size_t classes = 2 + rng.index(3);
    const std::size_t dim = 8;
    const std::size_t n = 6;

    inst.data.num_classes = classes;
    inst.data.feature_dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.id = i;
        for (std::size_t k = 0; k < dim; ++k) {
            s.x.push_back(rng.normal());
        }
        s.y_clean = rng.index(classes);
        s.y_noisy = rng.index(classes);
        inst.data.samples.push_back(std::move(s));
    }

    ArchitectureSpec arch{dim, classes, {4}, {4}};
    inst.params = init_params(arch, rng);
    // Non-zero biases so no symmetry hides a wrong gradient.
    for (auto* net : {&inst.params.classifier, &inst.params.transition}) {
        for (auto& layer : net->layers()) {
            for (double& b : layer.bias) {
                b = 0.5 * rng.normal();
            }
        }
    }

    for (const auto& s : inst.data.samples) {
        inst.batch.samples.push_back(&s);
        std::vector<double> c(classes, 0.0);
        c[rng.index(classes)] = 1.0;
        const auto u = sample_uncertainty(rng.uniform(), classes, rng);
        inst.batch.priors.push_back(build_prior(s.y_noisy, c, u));
    }
    inst.draws.assign(n, std::vector<std::size_t>(K));
    for (auto& row : inst.draws) {
        for (auto& d : row) {
            d = rng.index(classes);
        }
    }
    return inst;
}

struct GradientReport {
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
};

inline GradientReport check_gradient(const GradientInstance& inst, const LossTerms& terms, std::size_t K = 2,
                                     double h = 1e-5, double floor = 1e-6)
{
    auto draws = inst.draws;
    const auto analytic = oracle::flatten(evaluate_batch(inst.params, inst.batch, terms, K, draws, nullptr).grads);
    const auto numeric = oracle::finite_difference(
        inst.params,
        [&](const ModelParams& p) {
            auto d = inst.draws;
            return evaluate_batch(p, inst.batch, terms, K, d, nullptr).total;
        },
        h);
    GradientReport report;
    report.max_rel_error = oracle::max_relative_error(analytic, numeric, floor);
    for (double g : analytic) {
        report.max_abs_grad = std::max(report.max_abs_grad, std::abs(g));
    }
    return report;
}

} // namespace plslab::testing
