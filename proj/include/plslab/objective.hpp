#pragma once

#include "plslab/dataset.hpp"
#include "plslab/metrics.hpp"
#include "plslab/nn.hpp"
#include "plslab/pls.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace plslab {

enum class CausalMode { x_given_y, y_given_x };
enum class PriKl { forward, reversed };
enum class Ablation {
    full,
    no_estep,
    ce_pri,
    forward_pri,
    pri_only,
    ce_only,
    no_coverage,
    no_uncertainty,
    uniform_w,
    argmax_coverage,
    beta_zero,
};

std::string to_string(CausalMode mode);
std::string to_string(PriKl kind);
std::string to_string(Ablation ablation);
CausalMode parse_causal_mode(const std::string& name);
PriKl parse_pri_kl(const std::string& name);
Ablation parse_ablation(const std::string& name);
std::span<const Ablation> all_ablations();

struct TrainConfig {
    double beta = 0.9;
    std::size_t K = 1;
    std::size_t epochs = 50;
    std::size_t warmup_epochs = 10;
    double lr = 0.02;
    double weight_decay = 5e-4;
    // The learning rate is multiplied by 0.1 from this epoch on.
    std::size_t lr_decay_epoch = 35;
    std::size_t batch_size = 128;
    CausalMode causal_mode = CausalMode::x_given_y;
    PriKl pri_kl = PriKl::reversed;
    Ablation ablation = Ablation::full;
    std::uint64_t seed = 1;
    std::vector<std::size_t> classifier_hidden{64, 64};
    std::vector<std::size_t> transition_hidden{64, 64};
    RoundingMode rounding = RoundingMode::half_up;
    // Diagnostic: build PLS priors even in the ce_only arm (they must not affect training).
    bool priors_in_baseline = false;

    void validate() const;
};

// Which terms make up a batch loss.
enum class PriTerm { none, forward, reversed, ce_pri };
enum class EstepTerm { none, x_given_y, y_given_x };

struct LossTerms {
    bool classifier_ce = false; // -log g(x)[noisy], warmup and baseline only
    bool transition_ce = false; // sampled-label transition cross-entropy
    PriTerm pri = PriTerm::none;
    EstepTerm estep = EstepTerm::none;

    bool needs_priors() const { return pri != PriTerm::none || estep != EstepTerm::none; }
};

LossTerms warmup_terms();
LossTerms active_terms(const TrainConfig& cfg);
PriorOptions prior_options(const TrainConfig& cfg);

constexpr double kProbFloor = 1e-12;

// Within-batch p(x|y): entry (i, y) = g_i[y] / sum_j g_j[y].
Matrix approx_p_x_given_y(std::span<const LabelDist> posteriors);

// Marginal p(x_i) = sum_y p(x_i|y) p_i(y).
double approx_p_x(std::span<const double> p_x_given_y_row, const LabelDist& prior);

// KL[p || q] with both arguments floored at 1e-12 inside the log.
double kl_divergence(const LabelDist& p, const LabelDist& q);

// normalize(max(raw, 1e-12)).
LabelDist floored_target(std::span<const double> raw);

// Loss value and its gradient with respect to the distributions it consumes,
// already divided by the batch size.
struct TermGrad {
    double loss = 0.0;
    std::vector<std::vector<double>> d_posteriors;
    std::vector<std::vector<double>> d_transition;
    std::vector<double> p_x; // filled by the y_given_x E-step
};

TermGrad classifier_ce_term(std::span<const LabelDist> posteriors, std::span<const std::size_t> noisy);
// transition[i * K + j] = f(x_i, e_{draw_ij}).
TermGrad transition_ce_term(std::span<const LabelDist> transition, std::span<const std::size_t> noisy,
                            std::size_t K);
TermGrad pri_term(std::span<const LabelDist> posteriors, std::span<const LabelDist> priors, PriKl kind);
TermGrad ce_pri_term(std::span<const LabelDist> posteriors, std::span<const LabelDist> priors);
// transition[i] = f(x_i, g(x_i)). px_scale multiplies every p(x_i) (the
// y_given_x target is invariant to it).
TermGrad estep_term(std::span<const LabelDist> posteriors, std::span<const LabelDist> transition,
                    std::span<const LabelDist> priors, CausalMode mode, double px_scale = 1.0);

struct Batch {
    std::vector<const Sample*> samples;
    // Per-sample priors; may be empty when the loss terms do not use them.
    std::vector<LabelDist> priors;
};

// One minibatch forward/backward pass.
struct BatchResult {
    double loss_ce = 0.0;  // transition cross-entropy
    double loss_pri = 0.0; // classifier supervision: prior KL, soft CE on the prior, or noisy CE in warmup
    double loss_kl = 0.0;  // E-step KL
    double total = 0.0;

    std::vector<LabelDist> posteriors;
    std::vector<LabelDist> transition_out; // f(x_i, g(x_i)), when an E-step term is active
    Matrix p_x_given_y;                    // filled when a prior term is active
    std::vector<double> p_x;               // filled by the y_given_x E-step

    Gradients grads;
};

// Sampled clean labels for the transition cross-entropy, draws[i][j]. When
// `draws` is empty the labels are drawn from Cat(g(x_i)) with `rng` and
// stored; otherwise the given draws are reused (treated as constants).
BatchResult evaluate_batch(const ModelParams& params, const Batch& batch, const LossTerms& terms, std::size_t K,
                           std::vector<std::vector<std::size_t>>& draws, Rng* rng);

class DivergenceError : public NumericalError {
public:
    DivergenceError(std::size_t epoch, std::size_t batch, const std::string& term);

    std::size_t epoch() const { return epoch_; }
    std::size_t batch() const { return batch_; }
    const std::string& term() const { return term_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
    std::string term_;
};

// Optional hooks into the training loop.
class TrainObserver {
public:
    virtual ~TrainObserver() = default;
    virtual void on_priors(std::size_t /*epoch*/, std::span<const PriorState> /*states*/) {}
    virtual void on_batch(std::size_t /*epoch*/, std::size_t /*batch*/, const BatchResult& /*result*/) {}
    virtual void on_epoch(const MetricsRecord& /*record*/, const ModelParams& /*params*/) {}
};

struct TrainResult {
    ModelParams params;
    std::vector<MetricsRecord> history;
    std::vector<PriorState> prior_states;
};

// Shuffled minibatch index lists; a trailing batch of one joins the previous batch.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

// Warmup epochs train g on the noisy labels plus the transition cross-entropy;
// afterwards each epoch refreshes the priors and minimises the configured
// objective. Test accuracy is measured on `test` when given, else on the
// clean labels of `train_ds`.
TrainResult train(const Dataset& train_ds, const Dataset* test, const TrainConfig& cfg,
                  TrainObserver* observer = nullptr);

} // namespace plslab
