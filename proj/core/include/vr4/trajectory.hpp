#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/corpus.hpp"
#include "vr4/error.hpp"
#include "vr4/evidence.hpp"

namespace vr4 {
class CaptionerClient;
}

namespace vr4::trajectory {

enum class ToolName { clip, crop };

std::string to_string(ToolName n);

struct ToolCall {
    ToolName name = ToolName::clip;
    std::vector<int> frames; // clip
    int frame = 0;           // crop
    BoundingBox box;         // crop

    static ToolCall clip(std::vector<int> frames);
    static ToolCall crop(int frame, BoundingBox box);

    bool operator==(const ToolCall& other) const;
};

// Exactly one of tool_call / final_answer is set.
struct Turn {
    std::string think;
    std::optional<ToolCall> tool_call;
    std::optional<std::string> final_answer;

    bool operator==(const Turn&) const = default;
};

enum class Provenance { synthesized, edited, model_rollout };

std::string to_string(Provenance p);

struct Trajectory {
    std::string id;
    std::string instance_id;
    std::vector<Turn> turns;
    Provenance provenance = Provenance::synthesized;
    // Successive clips must move forward in time when set.
    bool forward_scan = true;

    bool operator==(const Trajectory&) const = default;
};

enum class ToolComposition { none, single_tool, mixed };

ToolComposition tool_composition(const Trajectory& t);
// Single-tool trajectories (one distinct tool name, at least one call).
bool is_drp_eligible(const Trajectory& t);

// Wire format of one turn:
//   <think>...</think>
//   <tool_call>{"name":"crop","arguments":{"frame":3,"box":[x1,y1,x2,y2]}}</tool_call>
// or, for the final turn, \boxed{answer} in place of the tool call.
// serialize_turn throws InputError for turns that cannot round-trip.
std::string serialize_turn(const Turn& turn);
// Throws ParseError carrying the first offending byte offset.
Turn parse_turn(std::string_view text);

nlohmann::ordered_json tool_call_to_json(const ToolCall& call);
// Throws InputError describing the offending argument.
ToolCall tool_call_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);

std::vector<Trajectory> load_trajectories(const std::filesystem::path& file);
void write_trajectories(const std::filesystem::path& file, std::span<const Trajectory> trajectories);

// Placeholder markers left by render_trajectory.
inline constexpr std::string_view kVideoCaption = "[[video_caption]]";
inline constexpr std::string_view kClipCaption = "[[clip_caption]]";
inline constexpr std::string_view kRegionCaption = "[[region_caption]]";
inline constexpr std::string_view kThink = "[[think]]";

bool has_placeholders(const Trajectory& t);

// Template family overview -> locate -> read -> answer.
//   "mixed"     clip over the relevant frames, one crop per evidence box, answer
//   "crop_only" one crop per evidence box, answer
//   "clip_only" clip over the relevant frames, answer
std::vector<std::string> template_ids();

// Throws InputError for unmatched records and unknown template ids.
Trajectory render_trajectory(const evidence::EvidenceRecord& ev, const QAInstance& q,
                             std::string_view template_id = "mixed");

// Error raised while filling placeholders; names the failing turn.
class FillError : public InputError {
public:
    FillError(std::size_t turn, const std::string& what)
        : InputError("turn " + std::to_string(turn) + ": " + what), turn_(turn) {}
    std::size_t turn() const { return turn_; }

private:
    std::size_t turn_;
};

// Replaces every placeholder, turn by turn, with client output. Caption slots
// describe the previous turn's tool result; think slots see the question and
// all text filled so far.
Trajectory fill_placeholders(const Trajectory& t, const Video& video, const QAInstance& q,
                             CaptionerClient& client);

enum class ViolationKind { grounding, temporal, correctness, format };

std::string to_string(ViolationKind k);

struct Violation {
    ViolationKind kind = ViolationKind::format;
    std::optional<std::size_t> turn;
    std::string message;

    bool operator==(const Violation&) const = default;
};

nlohmann::json to_json(const Violation& v);

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(ViolationKind k) const;
};

// Violations are data: this never throws for bad trajectories.
ValidationReport validate_trajectory(const Trajectory& t, const Corpus& corpus,
                                     const evidence::EvidenceRecord& ev);

} // namespace vr4::trajectory
