#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vr4/corpus.hpp"

namespace vr4::policy {

// A clip option: `length` consecutive frames starting at `start`.
struct Window {
    int start = 0;
    int length = 1;

    std::vector<int> frames() const;
    bool operator==(const Window&) const = default;
};

// What the policy can observe about one question before acting. Saliency
// cues are relative (the strongest frame or cell scores 1). `cell_reading`
// holds the candidate index legible in a cell's crop, or -1.
struct EpisodeContext {
    std::string instance_id;
    int frame_count = 0;
    int grid = 1;
    int cell_size = 1;
    std::vector<Window> windows;
    std::vector<double> frame_saliency;
    std::vector<std::vector<double>> cell_saliency;
    std::vector<std::vector<int>> cell_reading;
    std::vector<std::string> candidates;
    int prior_guess = 0;

    int cell_count() const { return grid * grid; }
    BoundingBox cell_box(int cell) const;
    // Frame a crop applies to: the most salient frame of the chosen window,
    // or frame 0 without a clip.
    int focus_frame(int clip) const;
};

inline constexpr int kNone = -1;

// One episode as three successive decisions: clip window (or none), crop
// cell of the focus frame (or none), answer candidate.
struct ActionSeq {
    int clip = kNone;
    int crop = kNone;
    int answer = 0;

    auto operator<=>(const ActionSeq&) const = default;
};

// All action sequences of the context, in a fixed order.
std::vector<ActionSeq> enumerate_actions(const EpisodeContext& ctx);

// Throws InputError when the sequence is outside the context's action space.
void check_actions(const EpisodeContext& ctx, const ActionSeq& seq);

class Policy {
public:
    virtual ~Policy() = default;

    virtual std::unique_ptr<Policy> clone() const = 0;

    virtual std::size_t dimension() const = 0;
    virtual const std::vector<double>& parameters() const = 0;
    virtual void set_parameters(std::vector<double> theta) = 0;

    virtual double log_prob(const EpisodeContext& ctx, const ActionSeq& seq) const = 0;
    virtual std::vector<double> grad_log_prob(const EpisodeContext& ctx, const ActionSeq& seq) const = 0;
    virtual ActionSeq sample(const EpisodeContext& ctx, std::uint64_t seed) const = 0;

    // Mean per-decision log-probability and its gradient; used for
    // action-level cross-entropy.
    virtual double mean_step_log_prob(const EpisodeContext& ctx, const ActionSeq& seq,
                                      std::vector<double>* gradient) const = 0;
};

// Log-linear policy over the three decisions with shared parameters:
//   0 no-clip bias        1 clip window saliency   2 clip window length - 1
//   3 no-crop bias        4 crop cell saliency
//   5 answer legible in the crop                    6 answer equals prior guess
class ToySoftmaxPolicy final : public Policy {
public:
    static constexpr std::size_t kDimension = 7;

    ToySoftmaxPolicy();
    explicit ToySoftmaxPolicy(std::vector<double> theta);

    std::unique_ptr<Policy> clone() const override { return std::make_unique<ToySoftmaxPolicy>(*this); }

    std::size_t dimension() const override { return kDimension; }
    const std::vector<double>& parameters() const override { return theta_; }
    void set_parameters(std::vector<double> theta) override;

    double log_prob(const EpisodeContext& ctx, const ActionSeq& seq) const override;
    std::vector<double> grad_log_prob(const EpisodeContext& ctx, const ActionSeq& seq) const override;
    ActionSeq sample(const EpisodeContext& ctx, std::uint64_t seed) const override;
    double mean_step_log_prob(const EpisodeContext& ctx, const ActionSeq& seq,
                              std::vector<double>* gradient) const override;

    using Features = std::vector<std::vector<double>>;

    // Feature rows for each option of a decision, given earlier choices.
    static Features clip_features(const EpisodeContext& ctx);
    static Features crop_features(const EpisodeContext& ctx, int clip);
    static Features answer_features(const EpisodeContext& ctx, int clip, int crop);

private:
    std::vector<double> theta_;
};

// Option index within a decision: kNone maps to 0, option k to k + 1.
inline int option_index(int choice) { return choice + 1; }

} // namespace vr4::policy
