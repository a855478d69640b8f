#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/corpus.hpp"
#include "vr4/trajectory.hpp"

namespace vr4 {

struct FeatureVector {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }

    bool operator==(const FeatureVector&) const = default;
};

// Maps pixels to features. Implementations must tolerate concurrent calls.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual FeatureVector encode(const Frame& frame) const = 0;
    virtual std::size_t dimension() const = 0;
};

// Mean-pools onto an 8x8 grid, flattens to 64 values, subtracts the mean and
// L2-normalizes. Constant images map to the first basis vector.
class PooledEncoder final : public Encoder {
public:
    static constexpr int kGrid = 8;

    FeatureVector encode(const Frame& frame) const override;
    std::size_t dimension() const override { return kGrid * kGrid; }
};

// Throws InputError for zero-area frames.
FeatureVector encode_feature(const Frame& frame);

}

namespace vr4::env {

struct ClipGroup {
    // Indices into RuminationState::all_frame_features.
    std::vector<std::size_t> frame_refs;
};

struct RuminationState {
    std::vector<FeatureVector> all_frame_features;
    std::vector<ClipGroup> clips;
    std::vector<FeatureVector> selected_region_features;
    std::size_t tool_call_count = 0;
    std::vector<trajectory::ToolCall> transcript;

    // Features of every clipped frame, in selection order.
    std::vector<FeatureVector> selected_frame_features() const;
    // Features chosen by the most recent clip; empty before any clip.
    std::vector<FeatureVector> last_clip_features() const;
};

// Throws InputError for a video with no frames.
RuminationState init_state(const Video& video, const Encoder& encoder);

// Both throw InputError and leave the state untouched on invalid input.
void apply_clip(RuminationState& state, std::span<const int> indices);
void apply_crop(RuminationState& state, const Video& video, int frame_index, const BoundingBox& box,
                const Encoder& encoder);

struct EpisodeRecord {
    std::string instance_id;
    std::string final_answer;
    RuminationState state;
    bool format_ok = false;
    bool truncated = false;
    std::vector<std::string> notes;
};

inline constexpr std::size_t kDefaultMaxCalls = 8;

// Executes raw turn texts (as a model would emit them) against a fresh state.
// Never throws for bad turns; problems clear format_ok and land in notes.
EpisodeRecord run_transcript(const std::string& instance_id, std::span<const std::string> turns,
                             const Video& video, const Encoder& encoder, std::size_t max_calls = kDefaultMaxCalls);

// Serializes each turn and runs it through run_transcript.
EpisodeRecord run_trajectory(const trajectory::Trajectory& t, const Video& video, const Encoder& encoder,
                             std::size_t max_calls = kDefaultMaxCalls);

nlohmann::json to_json(const EpisodeRecord& episode);

} // namespace vr4::env
