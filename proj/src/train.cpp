#include "plslab/objective.hpp"

#include <cmath>
#include <numeric>

namespace plslab {

namespace {

// Independent random streams, so that e.g. building priors never shifts the
// minibatch order of the baseline arm.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kPriorStream = 3;

constexpr double kLrDecayFactor = 0.1;

std::vector<LabelDist> all_posteriors(const ModelParams& params, const Dataset& ds)
{
    std::vector<LabelDist> out;
    out.reserve(ds.size());
    for (const auto& s : ds.samples) {
        out.push_back(forward_classifier(params, s.x).probs);
    }
    return out;
}

void check_finite(double value, std::size_t epoch, std::size_t batch, const char* term)
{
    if (!std::isfinite(value)) {
        throw DivergenceError(epoch, batch, term);
    }
}

} // namespace

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        if (end - start == 1 && !batches.empty()) {
            batches.back().push_back(order[start]);
        } else {
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    return batches;
}

TrainResult train(const Dataset& train_ds, const Dataset* test, const TrainConfig& cfg, TrainObserver* observer)
{
    cfg.validate();
    train_ds.validate();
    if (train_ds.size() < 2) {
        throw std::invalid_argument("train: need at least two training samples");
    }
    if (test != nullptr && (test->feature_dim != train_ds.feature_dim || test->num_classes != train_ds.num_classes)) {
        throw std::invalid_argument("train: test set shape differs from the training set");
    }

    Rng init_rng(mix_seed(cfg.seed, kInitStream));
    Rng batch_rng(mix_seed(cfg.seed, kBatchStream));
    Rng prior_rng(mix_seed(cfg.seed, kPriorStream));

    ArchitectureSpec arch;
    arch.feature_dim = train_ds.feature_dim;
    arch.num_classes = train_ds.num_classes;
    arch.classifier_hidden = cfg.classifier_hidden;
    arch.transition_hidden = cfg.transition_hidden;

    TrainResult result;
    result.params = init_params(arch, init_rng);
    ModelParams& params = result.params;

    std::vector<std::size_t> noisy(train_ds.size());
    std::vector<std::size_t> clean(train_ds.size());
    for (const auto& s : train_ds.samples) {
        noisy[s.id] = s.y_noisy;
        clean[s.id] = s.y_clean;
    }
    result.prior_states = initial_prior_states(noisy, train_ds.num_classes);
    auto& states = result.prior_states;

    const LossTerms warmup = warmup_terms();
    const LossTerms active = active_terms(cfg);
    const PriorOptions options = prior_options(cfg);
    const bool baseline = cfg.ablation == Ablation::ce_only;
    const Dataset& eval_set = test != nullptr ? *test : train_ds;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = epoch >= cfg.lr_decay_epoch ? cfg.lr * kLrDecayFactor : cfg.lr;
        const bool post_warmup = epoch >= cfg.warmup_epochs;
        const bool build_priors = post_warmup && (!baseline || cfg.priors_in_baseline);
        const LossTerms& terms = post_warmup ? active : warmup;

        if (build_priors) {
            refresh_priors(states, all_posteriors(params, train_ds), noisy, options, prior_rng);
            if (observer != nullptr) {
                observer->on_priors(epoch, states);
            }
        }

        MetricsRecord record;
        record.epoch = epoch;
        const auto batches = make_batches(train_ds.size(), cfg.batch_size, batch_rng);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            Batch batch;
            for (std::size_t idx : batches[b]) {
                batch.samples.push_back(&train_ds.samples[idx]);
                if (terms.needs_priors()) {
                    batch.priors.push_back(states[idx].prior);
                }
            }
            std::vector<std::vector<std::size_t>> draws;
            auto out = evaluate_batch(params, batch, terms, cfg.K, draws, &batch_rng);
            check_finite(out.loss_ce, epoch, b, "loss_ce");
            check_finite(out.loss_pri, epoch, b, "loss_pri");
            check_finite(out.loss_kl, epoch, b, "loss_kl");
            if (!all_finite(out.grads)) {
                throw DivergenceError(epoch, b, "gradient");
            }
            sgd_step(params, out.grads, lr, cfg.weight_decay);
            if (!all_finite(params)) {
                throw DivergenceError(epoch, b, "parameters");
            }
            record.loss_ce += out.loss_ce;
            record.loss_pri += out.loss_pri;
            record.loss_kl += out.loss_kl;
            if (observer != nullptr) {
                observer->on_batch(epoch, b, out);
            }
        }
        const double nb = static_cast<double>(batches.size());
        record.loss_ce /= nb;
        record.loss_pri /= nb;
        record.loss_kl /= nb;

        std::vector<LabelDist> priors;
        priors.reserve(states.size());
        for (const auto& s : states) {
            priors.push_back(s.prior);
        }
        const auto cu = coverage_uncertainty(priors, clean);
        const auto split = split_uncertainty(priors, train_ds);
        record.coverage = cu.coverage;
        record.unc_clean = split.clean;
        record.unc_noisy = split.noisy;
        record.test_acc = test_accuracy(params, eval_set);
        record.transition_mse = transition_mse(params, train_ds);
        result.history.push_back(record);
        if (observer != nullptr) {
            observer->on_epoch(record, params);
        }
    }
    return result;
}

} // namespace plslab
