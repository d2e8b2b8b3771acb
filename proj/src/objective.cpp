#include "plslab/objective.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace plslab {

namespace {

double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

// Target t = normalize(max(raw, floor)) plus the pieces needed to pull a
// gradient dL/dt back to dL/draw.
struct Target {
    std::vector<double> raw;
    LabelDist t;
    double mass = 0.0;
};

Target make_target(std::vector<double> raw)
{
    Target out;
    std::vector<double> r(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
        r[k] = std::max(raw[k], kProbFloor);
        out.mass += r[k];
    }
    for (double& v : r) {
        v /= out.mass;
    }
    out.raw = std::move(raw);
    out.t = LabelDist(std::move(r));
    return out;
}

std::vector<double> target_backward(const Target& target, std::span<const double> dt)
{
    double dot = 0.0;
    for (std::size_t k = 0; k < dt.size(); ++k) {
        dot += target.t[k] * dt[k];
    }
    std::vector<double> draw(dt.size());
    for (std::size_t k = 0; k < dt.size(); ++k) {
        draw[k] = target.raw[k] > kProbFloor ? (dt[k] - dot) / target.mass : 0.0;
    }
    return draw;
}

// KL[g || t] (forward) or KL[t || g] (reversed) for one sample; accumulates
// dL/dg into dg and returns the value together with dL/dt.
double kl_with_grads(const LabelDist& g, const LabelDist& t, bool g_first, double scale, std::vector<double>& dg,
                     std::vector<double>& dt)
{
    const std::size_t classes = g.size();
    dt.assign(classes, 0.0);
    double value = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
        const double log_g = floored_log(g[k]);
        const double log_t = std::log(t[k]);
        const bool g_active = g[k] > kProbFloor;
        if (g_first) {
            value += g[k] * (log_g - log_t);
            dg[k] += scale * (log_g - log_t + (g_active ? 1.0 : 0.0));
            dt[k] = -scale * g[k] / t[k];
        } else {
            value += t[k] * (log_t - log_g);
            dg[k] += g_active ? -scale * t[k] / g[k] : 0.0;
            dt[k] = scale * (log_t + 1.0 - log_g);
        }
    }
    return value;
}

// Adds the gradient flowing through P = approx_p_x_given_y(g) into d_posteriors.
void p_x_given_y_backward(std::span<const LabelDist> g, const Matrix& dP, std::vector<std::vector<double>>& dg)
{
    const std::size_t n = g.size();
    const std::size_t classes = dP.cols;
    for (std::size_t y = 0; y < classes; ++y) {
        double column = 0.0;
        double weighted = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            column += g[i][y];
        }
        for (std::size_t i = 0; i < n; ++i) {
            weighted += dP(i, y) * g[i][y];
        }
        for (std::size_t j = 0; j < n; ++j) {
            dg[j][y] += dP(j, y) / column - weighted / (column * column);
        }
    }
}

std::vector<std::vector<double>> zero_grads(std::size_t n, std::size_t classes)
{
    return std::vector<std::vector<double>>(n, std::vector<double>(classes, 0.0));
}

void check_batch(std::span<const LabelDist> posteriors, std::span<const LabelDist> priors)
{
    if (posteriors.size() < 2) {
        throw std::invalid_argument("p(x|y) approximation needs a batch of at least two samples");
    }
    if (priors.size() != posteriors.size()) {
        throw std::invalid_argument("one prior per posterior required");
    }
}

constexpr std::array<Ablation, 11> kAblations{
    Ablation::full,          Ablation::no_estep,       Ablation::ce_pri,    Ablation::forward_pri,
    Ablation::pri_only,      Ablation::ce_only,        Ablation::no_coverage, Ablation::no_uncertainty,
    Ablation::uniform_w,     Ablation::argmax_coverage, Ablation::beta_zero,
};

} // namespace

std::string to_string(CausalMode mode) { return mode == CausalMode::x_given_y ? "x_given_y" : "y_given_x"; }

std::string to_string(PriKl kind) { return kind == PriKl::forward ? "forward" : "reversed"; }

std::string to_string(Ablation ablation)
{
    switch (ablation) {
    case Ablation::full: return "full";
    case Ablation::no_estep: return "no_estep";
    case Ablation::ce_pri: return "ce_pri";
    case Ablation::forward_pri: return "forward_pri";
    case Ablation::pri_only: return "pri_only";
    case Ablation::ce_only: return "ce_only";
    case Ablation::no_coverage: return "no_coverage";
    case Ablation::no_uncertainty: return "no_uncertainty";
    case Ablation::uniform_w: return "uniform_w";
    case Ablation::argmax_coverage: return "argmax_coverage";
    case Ablation::beta_zero: return "beta_zero";
    }
    return "full";
}

CausalMode parse_causal_mode(const std::string& name)
{
    if (name == "x_given_y") return CausalMode::x_given_y;
    if (name == "y_given_x") return CausalMode::y_given_x;
    throw std::invalid_argument("unknown causal mode '" + name + "' (expected x_given_y or y_given_x)");
}

PriKl parse_pri_kl(const std::string& name)
{
    if (name == "forward") return PriKl::forward;
    if (name == "reversed") return PriKl::reversed;
    throw std::invalid_argument("unknown pri_kl '" + name + "' (expected forward or reversed)");
}

Ablation parse_ablation(const std::string& name)
{
    for (Ablation a : kAblations) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw std::invalid_argument("unknown ablation '" + name + "'");
}

std::span<const Ablation> all_ablations() { return kAblations; }

void TrainConfig::validate() const
{
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (warmup_epochs > epochs) throw std::invalid_argument("warmup_epochs must not exceed epochs");
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be nonnegative");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
    for (std::size_t h : classifier_hidden) {
        if (h == 0) throw std::invalid_argument("classifier_hidden widths must be positive");
    }
    for (std::size_t h : transition_hidden) {
        if (h == 0) throw std::invalid_argument("transition_hidden widths must be positive");
    }
}

LossTerms warmup_terms()
{
    LossTerms t;
    t.classifier_ce = true;
    t.transition_ce = true;
    return t;
}

LossTerms active_terms(const TrainConfig& cfg)
{
    LossTerms t;
    const PriTerm configured = cfg.pri_kl == PriKl::forward ? PriTerm::forward : PriTerm::reversed;
    const EstepTerm estep = cfg.causal_mode == CausalMode::x_given_y ? EstepTerm::x_given_y : EstepTerm::y_given_x;
    switch (cfg.ablation) {
    case Ablation::ce_only: return warmup_terms();
    case Ablation::pri_only:
        t.pri = configured;
        return t;
    case Ablation::no_estep:
        t.transition_ce = true;
        t.pri = configured;
        return t;
    case Ablation::ce_pri:
        t.transition_ce = true;
        t.pri = PriTerm::ce_pri;
        t.estep = estep;
        return t;
    case Ablation::forward_pri:
        t.transition_ce = true;
        t.pri = PriTerm::forward;
        t.estep = estep;
        return t;
    default:
        t.transition_ce = true;
        t.pri = configured;
        t.estep = estep;
        return t;
    }
}

PriorOptions prior_options(const TrainConfig& cfg)
{
    PriorOptions o;
    o.beta = cfg.beta;
    o.rounding = cfg.rounding;
    switch (cfg.ablation) {
    case Ablation::no_coverage: o.use_coverage = false; break;
    case Ablation::no_uncertainty: o.use_uncertainty = false; break;
    case Ablation::uniform_w: o.uniform_w = true; break;
    case Ablation::beta_zero: o.beta = 0.0; break;
    case Ablation::argmax_coverage:
        // Coverage follows the current prediction only.
        o.beta = 0.0;
        o.coverage_mode = CoverageMode::argmax;
        break;
    default: break;
    }
    return o;
}

Matrix approx_p_x_given_y(std::span<const LabelDist> posteriors)
{
    if (posteriors.size() < 2) {
        throw std::invalid_argument("approx_p_x_given_y: batch must hold at least two samples");
    }
    const std::size_t classes = posteriors.front().size();
    Matrix out(posteriors.size(), classes);
    for (std::size_t y = 0; y < classes; ++y) {
        double column = 0.0;
        for (const auto& g : posteriors) {
            column += g[y];
        }
        if (!(column > 0.0)) {
            throw std::invalid_argument("approx_p_x_given_y: class column has zero mass");
        }
        for (std::size_t i = 0; i < posteriors.size(); ++i) {
            out(i, y) = posteriors[i][y] / column;
        }
    }
    return out;
}

double approx_p_x(std::span<const double> p_x_given_y_row, const LabelDist& prior)
{
    if (p_x_given_y_row.size() != prior.size()) {
        throw std::invalid_argument("approx_p_x: shape mismatch");
    }
    double total = 0.0;
    for (std::size_t y = 0; y < prior.size(); ++y) {
        total += p_x_given_y_row[y] * prior[y];
    }
    return total;
}

double kl_divergence(const LabelDist& p, const LabelDist& q)
{
    if (p.size() != q.size()) {
        throw std::invalid_argument("kl_divergence: size mismatch");
    }
    double value = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] > 0.0) {
            value += p[k] * (floored_log(p[k]) - floored_log(q[k]));
        }
    }
    return value;
}

LabelDist floored_target(std::span<const double> raw) { return make_target({raw.begin(), raw.end()}).t; }

TermGrad classifier_ce_term(std::span<const LabelDist> posteriors, std::span<const std::size_t> noisy)
{
    const std::size_t n = posteriors.size();
    TermGrad out;
    out.d_posteriors = zero_grads(n, n ? posteriors.front().size() : 0);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = posteriors[i][noisy[i]];
        out.loss -= scale * floored_log(p);
        if (p > kProbFloor) {
            out.d_posteriors[i][noisy[i]] = -scale / p;
        }
    }
    return out;
}

TermGrad transition_ce_term(std::span<const LabelDist> transition, std::span<const std::size_t> noisy,
                            std::size_t K)
{
    if (K == 0 || transition.size() != noisy.size() * K) {
        throw std::invalid_argument("transition_ce_term: expected K outputs per sample");
    }
    TermGrad out;
    out.d_transition = zero_grads(transition.size(), transition.empty() ? 0 : transition.front().size());
    const double scale = 1.0 / static_cast<double>(transition.size());
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        for (std::size_t j = 0; j < K; ++j) {
            const std::size_t idx = i * K + j;
            const double p = transition[idx][noisy[i]];
            out.loss -= scale * floored_log(p);
            if (p > kProbFloor) {
                out.d_transition[idx][noisy[i]] = -scale / p;
            }
        }
    }
    return out;
}

TermGrad pri_term(std::span<const LabelDist> posteriors, std::span<const LabelDist> priors, PriKl kind)
{
    check_batch(posteriors, priors);
    const std::size_t n = posteriors.size();
    const std::size_t classes = posteriors.front().size();
    const double scale = 1.0 / static_cast<double>(n);
    const Matrix P = approx_p_x_given_y(posteriors);

    TermGrad out;
    out.d_posteriors = zero_grads(n, classes);
    Matrix dP(n, classes);
    std::vector<double> dt;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> raw(classes);
        for (std::size_t y = 0; y < classes; ++y) {
            raw[y] = P(i, y) * priors[i][y];
        }
        const Target target = make_target(std::move(raw));
        out.loss += scale * kl_with_grads(posteriors[i], target.t, kind == PriKl::forward, scale,
                                          out.d_posteriors[i], dt);
        const auto draw = target_backward(target, dt);
        for (std::size_t y = 0; y < classes; ++y) {
            dP(i, y) = draw[y] * priors[i][y];
        }
    }
    p_x_given_y_backward(posteriors, dP, out.d_posteriors);
    return out;
}

TermGrad ce_pri_term(std::span<const LabelDist> posteriors, std::span<const LabelDist> priors)
{
    if (priors.size() != posteriors.size()) {
        throw std::invalid_argument("ce_pri_term: one prior per posterior required");
    }
    const std::size_t n = posteriors.size();
    TermGrad out;
    out.d_posteriors = zero_grads(n, n ? posteriors.front().size() : 0);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t y = 0; y < priors[i].size(); ++y) {
            const double g = posteriors[i][y];
            out.loss -= scale * priors[i][y] * floored_log(g);
            if (g > kProbFloor) {
                out.d_posteriors[i][y] = -scale * priors[i][y] / g;
            }
        }
    }
    return out;
}

TermGrad estep_term(std::span<const LabelDist> posteriors, std::span<const LabelDist> transition,
                    std::span<const LabelDist> priors, CausalMode mode, double px_scale)
{
    check_batch(posteriors, priors);
    if (transition.size() != posteriors.size()) {
        throw std::invalid_argument("estep_term: one transition output per sample required");
    }
    const std::size_t n = posteriors.size();
    const std::size_t classes = posteriors.front().size();
    const double scale = 1.0 / static_cast<double>(n);

    TermGrad out;
    out.d_posteriors = zero_grads(n, classes);
    out.d_transition = zero_grads(n, classes);

    Matrix P;
    Matrix dP;
    if (mode == CausalMode::y_given_x) {
        P = approx_p_x_given_y(posteriors);
        dP = Matrix(n, classes);
        out.p_x.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            out.p_x[i] = px_scale * approx_p_x(P.row(i), priors[i]);
        }
    }

    std::vector<double> dt;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> raw(classes);
        for (std::size_t y = 0; y < classes; ++y) {
            raw[y] = mode == CausalMode::x_given_y ? transition[i][y] * priors[i][y] : transition[i][y] * out.p_x[i];
        }
        const Target target = make_target(std::move(raw));
        out.loss += scale * kl_with_grads(posteriors[i], target.t, true, scale, out.d_posteriors[i], dt);
        const auto draw = target_backward(target, dt);
        if (mode == CausalMode::x_given_y) {
            for (std::size_t y = 0; y < classes; ++y) {
                out.d_transition[i][y] = draw[y] * priors[i][y];
            }
        } else {
            double dpx = 0.0;
            for (std::size_t y = 0; y < classes; ++y) {
                out.d_transition[i][y] = draw[y] * out.p_x[i];
                dpx += draw[y] * transition[i][y];
            }
            for (std::size_t y = 0; y < classes; ++y) {
                dP(i, y) = dpx * px_scale * priors[i][y];
            }
        }
    }
    if (mode == CausalMode::y_given_x) {
        p_x_given_y_backward(posteriors, dP, out.d_posteriors);
    }
    return out;
}

BatchResult evaluate_batch(const ModelParams& params, const Batch& batch, const LossTerms& terms, std::size_t K,
                           std::vector<std::vector<std::size_t>>& draws, Rng* rng)
{
    const std::size_t n = batch.samples.size();
    const std::size_t classes = params.num_classes();
    if (n == 0) {
        throw std::invalid_argument("evaluate_batch: empty batch");
    }
    if (terms.needs_priors() && batch.priors.size() != n) {
        throw std::invalid_argument("evaluate_batch: loss terms need one prior per sample");
    }

    BatchResult result;
    LossTrace trace;
    std::vector<std::size_t> noisy(n);
    trace.classifier_calls.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Sample& s = *batch.samples[i];
        noisy[i] = s.y_noisy;
        auto out = forward_classifier(params, s.x);
        result.posteriors.push_back(out.probs);
        trace.classifier_calls.push_back({std::move(out.trace), std::move(out.probs), {}});
    }

    auto add_dprobs = [](std::vector<double>& into, const std::vector<double>& from) {
        if (into.empty()) {
            into.assign(from.size(), 0.0);
        }
        for (std::size_t k = 0; k < from.size(); ++k) {
            into[k] += from[k];
        }
    };

    if (terms.classifier_ce) {
        const auto term = classifier_ce_term(result.posteriors, noisy);
        result.loss_pri += term.loss;
        for (std::size_t i = 0; i < n; ++i) {
            add_dprobs(trace.classifier_calls[i].dprobs, term.d_posteriors[i]);
        }
    }

    if (terms.transition_ce) {
        if (draws.empty()) {
            if (rng == nullptr) {
                throw std::invalid_argument("evaluate_batch: no draws and no generator");
            }
            draws.assign(n, std::vector<std::size_t>(K));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < K; ++j) {
                    draws[i][j] = rng->categorical(result.posteriors[i].probs());
                }
            }
        }
        if (draws.size() != n) {
            throw std::invalid_argument("evaluate_batch: draws do not match the batch");
        }
        std::vector<LabelDist> outputs;
        const std::size_t first = trace.transition_calls.size();
        for (std::size_t i = 0; i < n; ++i) {
            if (draws[i].size() != K) {
                throw std::invalid_argument("evaluate_batch: expected K draws per sample");
            }
            for (std::size_t j = 0; j < K; ++j) {
                auto out = forward_transition(params, batch.samples[i]->x, LabelDist::one_hot(classes, draws[i][j]));
                outputs.push_back(out.probs);
                trace.transition_calls.push_back({std::move(out.trace), std::move(out.probs), {}, -1});
            }
        }
        const auto term = transition_ce_term(outputs, noisy, K);
        result.loss_ce = term.loss;
        for (std::size_t k = 0; k < outputs.size(); ++k) {
            trace.transition_calls[first + k].dprobs = term.d_transition[k];
        }
    }

    if (terms.pri == PriTerm::forward || terms.pri == PriTerm::reversed) {
        result.p_x_given_y = approx_p_x_given_y(result.posteriors);
        const auto term =
            pri_term(result.posteriors, batch.priors, terms.pri == PriTerm::forward ? PriKl::forward : PriKl::reversed);
        result.loss_pri += term.loss;
        for (std::size_t i = 0; i < n; ++i) {
            add_dprobs(trace.classifier_calls[i].dprobs, term.d_posteriors[i]);
        }
    } else if (terms.pri == PriTerm::ce_pri) {
        const auto term = ce_pri_term(result.posteriors, batch.priors);
        result.loss_pri += term.loss;
        for (std::size_t i = 0; i < n; ++i) {
            add_dprobs(trace.classifier_calls[i].dprobs, term.d_posteriors[i]);
        }
    }

    if (terms.estep != EstepTerm::none) {
        const std::size_t first = trace.transition_calls.size();
        for (std::size_t i = 0; i < n; ++i) {
            auto out = forward_transition(params, batch.samples[i]->x, result.posteriors[i]);
            result.transition_out.push_back(out.probs);
            trace.transition_calls.push_back(
                {std::move(out.trace), std::move(out.probs), {}, static_cast<std::ptrdiff_t>(i)});
        }
        const auto mode = terms.estep == EstepTerm::x_given_y ? CausalMode::x_given_y : CausalMode::y_given_x;
        auto term = estep_term(result.posteriors, result.transition_out, batch.priors, mode);
        result.loss_kl = term.loss;
        result.p_x = std::move(term.p_x);
        if (mode == CausalMode::y_given_x && result.p_x_given_y.values.empty()) {
            result.p_x_given_y = approx_p_x_given_y(result.posteriors);
        }
        for (std::size_t i = 0; i < n; ++i) {
            add_dprobs(trace.classifier_calls[i].dprobs, term.d_posteriors[i]);
            trace.transition_calls[first + i].dprobs = std::move(term.d_transition[i]);
        }
    }

    result.total = result.loss_ce + result.loss_pri + result.loss_kl;
    result.grads = backward(params, std::move(trace));
    return result;
}

DivergenceError::DivergenceError(std::size_t epoch, std::size_t batch, const std::string& term)
    : NumericalError("non-finite " + term + " at epoch " + std::to_string(epoch) + ", batch " +
                     std::to_string(batch)),
      epoch_(epoch), batch_(batch), term_(term)
{
}

} // namespace plslab
