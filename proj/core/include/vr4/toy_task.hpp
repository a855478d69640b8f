#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vr4/corpus.hpp"
#include "vr4/env.hpp"
#include "vr4/policy.hpp"
#include "vr4/trajectory.hpp"

// Synthetic planted-text task used to exercise the training loop end to end.
// Each video hides the answer word, drawn as a high-contrast glyph, in one
// cell of one frame; some other frames carry fainter glyphs of wrong
// candidates. Reading the word requires cropping the right cell of the right
// frame.
namespace vr4::toy {

struct TaskConfig {
    int frames = 4;
    int grid = 2;
    int cell_size = 16;
    int candidates = 4;
    int max_window = 2;
    double prior_accuracy = 0.4;
    double decoy_rate = 0.5;

    void validate() const;
};

nlohmann::json to_json(const TaskConfig& cfg);
TaskConfig task_config_from_json(const nlohmann::json& j, TaskConfig base = {});

struct ToyInstance {
    QAInstance qa;
    Video video;
    std::vector<std::string> candidates;
    int answer = 0;
    int planted_frame = 0;
    int planted_cell = 0;
    int prior_guess = 0;
};

// 8x8 binary glyph of a word, row-major.
std::vector<bool> glyph_bits(std::string_view word);

// `frames` overrides cfg.frames (1 gives image-style instances).
ToyInstance make_instance(const TaskConfig& cfg, const std::string& id, int frames, std::uint64_t seed);
std::vector<ToyInstance> make_instances(const TaskConfig& cfg, const std::string& prefix, std::size_t count,
                                        int frames, std::uint64_t seed);

Corpus to_corpus(std::span<const ToyInstance> instances);

policy::EpisodeContext build_context(const ToyInstance& inst, const TaskConfig& cfg, const Encoder& encoder);

trajectory::Trajectory to_trajectory(const policy::EpisodeContext& ctx, const policy::ActionSeq& seq,
                                     const std::string& id,
                                     trajectory::Provenance provenance = trajectory::Provenance::model_rollout);
// Throws InputError for trajectories outside the context's action space.
policy::ActionSeq from_trajectory(const policy::EpisodeContext& ctx, const trajectory::Trajectory& t);

// Gold action sequence for a template ("crop_only", "clip_only", "mixed").
// crop_only needs the answer on frame 0. Throws InputError otherwise.
policy::ActionSeq demonstration(const policy::EpisodeContext& ctx, const ToyInstance& inst,
                                std::string_view template_id, std::uint64_t seed);

class ToyEnvironment {
public:
    ToyEnvironment(std::vector<ToyInstance> instances, TaskConfig cfg,
                   std::shared_ptr<const Encoder> encoder = std::make_shared<PooledEncoder>());

    std::size_t size() const { return instances_.size(); }
    const TaskConfig& config() const { return cfg_; }
    const ToyInstance& instance(std::size_t i) const { return instances_.at(i); }
    const policy::EpisodeContext& context(std::size_t i) const { return contexts_.at(i); }
    const Encoder& encoder() const { return *encoder_; }
    // Throws NotFoundError.
    std::size_t index_of(const std::string& instance_id) const;

    env::EpisodeRecord rollout(std::size_t i, const policy::ActionSeq& seq) const;

private:
    std::vector<ToyInstance> instances_;
    TaskConfig cfg_;
    std::shared_ptr<const Encoder> encoder_;
    std::vector<policy::EpisodeContext> contexts_;
    std::map<std::string, std::size_t> index_;
};

} // namespace vr4::toy
