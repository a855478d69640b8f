#include "vr4/env.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vr4/error.hpp"

using nlohmann::json;

namespace vr4 {

FeatureVector PooledEncoder::encode(const Frame& frame) const
{
    if (frame.width <= 0 || frame.height <= 0 || frame.pixels.empty()) {
        throw InputError("cannot encode a zero-area image");
    }
    FeatureVector out;
    out.values.resize(kGrid * kGrid);
    for (int gy = 0; gy < kGrid; ++gy) {
        const int y0 = gy * frame.height / kGrid;
        const int y1 = std::max(y0 + 1, (gy + 1) * frame.height / kGrid);
        for (int gx = 0; gx < kGrid; ++gx) {
            const int x0 = gx * frame.width / kGrid;
            const int x1 = std::max(x0 + 1, (gx + 1) * frame.width / kGrid);
            double sum = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) sum += frame.at(x, y);
            }
            out.values[static_cast<std::size_t>(gy * kGrid + gx)] = sum / ((y1 - y0) * (x1 - x0));
        }
    }
    double mean = 0.0;
    for (double v : out.values) mean += v;
    mean /= static_cast<double>(out.values.size());
    double norm = 0.0;
    for (double& v : out.values) {
        v -= mean;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-9) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        out.values[0] = 1.0;
        return out;
    }
    for (double& v : out.values) v /= norm;
    return out;
}

FeatureVector encode_feature(const Frame& frame)
{
    return PooledEncoder{}.encode(frame);
}

} // namespace vr4

namespace vr4::env {

std::vector<FeatureVector> RuminationState::selected_frame_features() const
{
    std::vector<FeatureVector> out;
    for (const auto& clip : clips) {
        for (std::size_t ref : clip.frame_refs) out.push_back(all_frame_features[ref]);
    }
    return out;
}

std::vector<FeatureVector> RuminationState::last_clip_features() const
{
    std::vector<FeatureVector> out;
    if (clips.empty()) return out;
    for (std::size_t ref : clips.back().frame_refs) out.push_back(all_frame_features[ref]);
    return out;
}

RuminationState init_state(const Video& video, const Encoder& encoder)
{
    if (video.frames.empty()) throw InputError("video '" + video.ref + "' has no frames");
    RuminationState state;
    state.all_frame_features.reserve(video.frames.size());
    for (const auto& af : video.frames) state.all_frame_features.push_back(encoder.encode(af.frame));
    return state;
}

void apply_clip(RuminationState& state, std::span<const int> indices)
{
    if (indices.empty()) throw InputError("clip needs at least one frame index");
    std::set<int> seen;
    ClipGroup group;
    for (int i : indices) {
        if (i < 0 || static_cast<std::size_t>(i) >= state.all_frame_features.size()) {
            throw InputError("clip frame index " + std::to_string(i) + " out of range [0," +
                             std::to_string(state.all_frame_features.size()) + ")");
        }
        if (!seen.insert(i).second) throw InputError("duplicate clip frame index " + std::to_string(i));
        group.frame_refs.push_back(static_cast<std::size_t>(i));
    }
    state.clips.push_back(std::move(group));
    state.tool_call_count += 1;
    state.transcript.push_back(trajectory::ToolCall::clip(std::vector<int>(indices.begin(), indices.end())));
}

void apply_crop(RuminationState& state, const Video& video, int frame_index, const BoundingBox& box,
                const Encoder& encoder)
{
    if (frame_index < 0 || static_cast<std::size_t>(frame_index) >= video.frame_count()) {
        throw InputError("crop frame index " + std::to_string(frame_index) + " out of range");
    }
    const Frame region = crop_pixels(video.frame(static_cast<std::size_t>(frame_index)), box);
    state.selected_region_features.push_back(encoder.encode(region));
    state.tool_call_count += 1;
    state.transcript.push_back(trajectory::ToolCall::crop(frame_index, box));
}

EpisodeRecord run_transcript(const std::string& instance_id, std::span<const std::string> turns, const Video& video,
                             const Encoder& encoder, std::size_t max_calls)
{
    EpisodeRecord ep;
    ep.instance_id = instance_id;
    try {
        ep.state = init_state(video, encoder);
    } catch (const Error& e) {
        ep.notes.push_back(e.what());
        return ep;
    }

    bool clean = true;
    std::size_t answers = 0;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        trajectory::Turn turn;
        try {
            turn = trajectory::parse_turn(turns[i]);
        } catch (const ParseError& e) {
            ep.notes.push_back("turn " + std::to_string(i) + ": " + e.what());
            clean = false;
            continue;
        }
        if (answers > 0) {
            ep.notes.push_back("turn " + std::to_string(i) + ": content after the final answer");
            clean = false;
            if (turn.final_answer) ++answers;
            continue;
        }
        if (turn.final_answer) {
            ep.final_answer = *turn.final_answer;
            ++answers;
            continue;
        }
        const auto& call = *turn.tool_call;
        if (ep.state.tool_call_count >= max_calls) {
            if (!ep.truncated) {
                ep.notes.push_back("turn " + std::to_string(i) + ": call budget of " + std::to_string(max_calls) +
                                   " exhausted; remaining calls ignored");
            }
            ep.truncated = true;
            continue;
        }
        try {
            if (call.name == trajectory::ToolName::clip) {
                apply_clip(ep.state, call.frames);
            } else {
                apply_crop(ep.state, video, call.frame, call.box, encoder);
            }
        } catch (const Error& e) {
            ep.notes.push_back("turn " + std::to_string(i) + ": " + e.what());
            clean = false;
        }
    }
    if (answers != 1) {
        ep.notes.push_back("expected exactly one boxed answer, found " + std::to_string(answers));
    }
    ep.format_ok = clean && !ep.truncated && answers == 1;
    return ep;
}

EpisodeRecord run_trajectory(const trajectory::Trajectory& t, const Video& video, const Encoder& encoder,
                             std::size_t max_calls)
{
    std::vector<std::string> raw;
    raw.reserve(t.turns.size());
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        try {
            raw.push_back(trajectory::serialize_turn(t.turns[i]));
        } catch (const Error&) {
            // An empty turn fails to parse, which keeps the index aligned.
            raw.emplace_back();
        }
    }
    return run_transcript(t.instance_id, raw, video, encoder, max_calls);
}

json to_json(const EpisodeRecord& ep)
{
    json transcript = json::array();
    for (const auto& call : ep.state.transcript) transcript.push_back(json::parse(trajectory::tool_call_to_json(call).dump()));
    json clips = json::array();
    for (const auto& c : ep.state.clips) clips.push_back(c.frame_refs);
    return json{{"instance_id", ep.instance_id},
                {"final_answer", ep.final_answer},
                {"format_ok", ep.format_ok},
                {"truncated", ep.truncated},
                {"tool_call_count", ep.state.tool_call_count},
                {"clips", std::move(clips)},
                {"region_count", ep.state.selected_region_features.size()},
                {"transcript", std::move(transcript)},
                {"notes", ep.notes}};
}

} // namespace vr4::env
