#include "vr4/policy.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vr4/error.hpp"

namespace vr4::policy {

std::vector<int> Window::frames() const
{
    std::vector<int> out;
    for (int i = 0; i < length; ++i) out.push_back(start + i);
    return out;
}

BoundingBox EpisodeContext::cell_box(int cell) const
{
    if (cell < 0 || cell >= cell_count()) throw InputError("cell index out of range");
    const int gx = cell % grid;
    const int gy = cell / grid;
    return {gx * cell_size, gy * cell_size, (gx + 1) * cell_size, (gy + 1) * cell_size};
}

int EpisodeContext::focus_frame(int clip) const
{
    if (clip == kNone) return 0;
    if (clip < 0 || clip >= static_cast<int>(windows.size())) throw InputError("clip option out of range");
    const auto& w = windows[static_cast<std::size_t>(clip)];
    int best = w.start;
    for (int f = w.start; f < w.start + w.length; ++f) {
        if (frame_saliency[static_cast<std::size_t>(f)] > frame_saliency[static_cast<std::size_t>(best)]) best = f;
    }
    return best;
}

std::vector<ActionSeq> enumerate_actions(const EpisodeContext& ctx)
{
    std::vector<ActionSeq> out;
    const int windows = static_cast<int>(ctx.windows.size());
    const int answers = static_cast<int>(ctx.candidates.size());
    for (int c = kNone; c < windows; ++c) {
        for (int r = kNone; r < ctx.cell_count(); ++r) {
            for (int a = 0; a < answers; ++a) out.push_back(ActionSeq{c, r, a});
        }
    }
    return out;
}

void check_actions(const EpisodeContext& ctx, const ActionSeq& seq)
{
    if (seq.clip < kNone || seq.clip >= static_cast<int>(ctx.windows.size())) {
        throw InputError("clip option out of range");
    }
    if (seq.crop < kNone || seq.crop >= ctx.cell_count()) throw InputError("crop option out of range");
    if (seq.answer < 0 || seq.answer >= static_cast<int>(ctx.candidates.size())) {
        throw InputError("answer option out of range");
    }
}

namespace {

std::vector<double> unit(std::size_t k, double scale = 1.0)
{
    std::vector<double> v(ToySoftmaxPolicy::kDimension, 0.0);
    v[k] = scale;
    return v;
}

std::vector<double> log_softmax(const ToySoftmaxPolicy::Features& rows, const std::vector<double>& theta)
{
    std::vector<double> logits;
    logits.reserve(rows.size());
    for (const auto& row : rows) {
        double z = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) z += row[k] * theta[k];
        logits.push_back(z);
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - top);
    const double lse = top + std::log(sum);
    for (double& z : logits) z -= lse;
    return logits;
}

// d/dtheta log p(chosen) = phi(chosen) - E_p[phi].
void accumulate_grad(const ToySoftmaxPolicy::Features& rows, const std::vector<double>& logp, std::size_t chosen,
                     std::vector<double>& grad)
{
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += rows[chosen][k];
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double p = std::exp(logp[i]);
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= p * rows[i][k];
    }
}

std::size_t draw(const std::vector<double>& logp, std::mt19937_64& rng)
{
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    double acc = 0.0;
    for (std::size_t i = 0; i < logp.size(); ++i) {
        acc += std::exp(logp[i]);
        if (u < acc) return i;
    }
    return logp.size() - 1;
}

struct Decisions {
    ToySoftmaxPolicy::Features clip;
    ToySoftmaxPolicy::Features crop;
    ToySoftmaxPolicy::Features answer;
};

Decisions features_for(const EpisodeContext& ctx, const ActionSeq& seq)
{
    check_actions(ctx, seq);
    return {ToySoftmaxPolicy::clip_features(ctx), ToySoftmaxPolicy::crop_features(ctx, seq.clip),
            ToySoftmaxPolicy::answer_features(ctx, seq.clip, seq.crop)};
}

} // namespace

ToySoftmaxPolicy::ToySoftmaxPolicy() : theta_(kDimension, 0.0) {}

ToySoftmaxPolicy::ToySoftmaxPolicy(std::vector<double> theta)
{
    set_parameters(std::move(theta));
}

void ToySoftmaxPolicy::set_parameters(std::vector<double> theta)
{
    if (theta.size() != kDimension) throw InputError("policy parameter vector has the wrong dimension");
    for (double v : theta) {
        if (!std::isfinite(v)) throw InputError("policy parameters must be finite");
    }
    theta_ = std::move(theta);
}

ToySoftmaxPolicy::Features ToySoftmaxPolicy::clip_features(const EpisodeContext& ctx)
{
    Features rows{unit(0)};
    for (const auto& w : ctx.windows) {
        double sal = 0.0;
        for (int f = w.start; f < w.start + w.length; ++f) {
            sal = std::max(sal, ctx.frame_saliency[static_cast<std::size_t>(f)]);
        }
        auto row = unit(1, sal);
        row[2] = w.length - 1;
        rows.push_back(std::move(row));
    }
    return rows;
}

ToySoftmaxPolicy::Features ToySoftmaxPolicy::crop_features(const EpisodeContext& ctx, int clip)
{
    const auto focus = static_cast<std::size_t>(ctx.focus_frame(clip));
    Features rows{unit(3)};
    for (int c = 0; c < ctx.cell_count(); ++c) rows.push_back(unit(4, ctx.cell_saliency[focus][static_cast<std::size_t>(c)]));
    return rows;
}

ToySoftmaxPolicy::Features ToySoftmaxPolicy::answer_features(const EpisodeContext& ctx, int clip, int crop)
{
    const auto focus = static_cast<std::size_t>(ctx.focus_frame(clip));
    const int reading = crop == kNone ? -1 : ctx.cell_reading[focus][static_cast<std::size_t>(crop)];
    Features rows;
    for (int a = 0; a < static_cast<int>(ctx.candidates.size()); ++a) {
        std::vector<double> row(kDimension, 0.0);
        row[5] = a == reading ? 1.0 : 0.0;
        row[6] = a == ctx.prior_guess ? 1.0 : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

double ToySoftmaxPolicy::log_prob(const EpisodeContext& ctx, const ActionSeq& seq) const
{
    const auto d = features_for(ctx, seq);
    return log_softmax(d.clip, theta_)[static_cast<std::size_t>(option_index(seq.clip))] +
           log_softmax(d.crop, theta_)[static_cast<std::size_t>(option_index(seq.crop))] +
           log_softmax(d.answer, theta_)[static_cast<std::size_t>(seq.answer)];
}

std::vector<double> ToySoftmaxPolicy::grad_log_prob(const EpisodeContext& ctx, const ActionSeq& seq) const
{
    const auto d = features_for(ctx, seq);
    std::vector<double> grad(kDimension, 0.0);
    accumulate_grad(d.clip, log_softmax(d.clip, theta_), static_cast<std::size_t>(option_index(seq.clip)), grad);
    accumulate_grad(d.crop, log_softmax(d.crop, theta_), static_cast<std::size_t>(option_index(seq.crop)), grad);
    accumulate_grad(d.answer, log_softmax(d.answer, theta_), static_cast<std::size_t>(seq.answer), grad);
    return grad;
}

ActionSeq ToySoftmaxPolicy::sample(const EpisodeContext& ctx, std::uint64_t seed) const
{
    if (ctx.candidates.empty()) throw InputError("context has no answer candidates");
    std::mt19937_64 rng(seed);
    ActionSeq seq;
    seq.clip = static_cast<int>(draw(log_softmax(clip_features(ctx), theta_), rng)) - 1;
    seq.crop = static_cast<int>(draw(log_softmax(crop_features(ctx, seq.clip), theta_), rng)) - 1;
    seq.answer = static_cast<int>(draw(log_softmax(answer_features(ctx, seq.clip, seq.crop), theta_), rng));
    return seq;
}

double ToySoftmaxPolicy::mean_step_log_prob(const EpisodeContext& ctx, const ActionSeq& seq,
                                            std::vector<double>* gradient) const
{
    if (gradient) {
        *gradient = grad_log_prob(ctx, seq);
        for (double& g : *gradient) g /= 3.0;
    }
    return log_prob(ctx, seq) / 3.0;
}

} // namespace vr4::policy
