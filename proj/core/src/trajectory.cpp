#include "vr4/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "vr4/captioner.hpp"
#include "vr4/error.hpp"
#include "vr4/text.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace vr4::trajectory {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kToolOpen = "<tool_call>";
constexpr std::string_view kToolClose = "</tool_call>";
constexpr std::string_view kBoxedOpen = "\\boxed{";

constexpr std::string_view kReservedInThink[] = {kThinkOpen, kThinkClose, kToolOpen, kToolClose, kBoxedOpen};

bool is_ws(char c)
{
    return c == ' ' || c == '\n' || c == '\t' || c == '\r';
}

std::size_t skip_ws(std::string_view s, std::size_t pos)
{
    while (pos < s.size() && is_ws(s[pos])) ++pos;
    return pos;
}

bool balanced_braces(std::string_view s)
{
    int depth = 0;
    for (char c : s) {
        if (c == '{') ++depth;
        if (c == '}' && --depth < 0) return false;
    }
    return depth == 0;
}

std::string join_ints(const std::vector<int>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string box_text(const BoundingBox& b)
{
    return "[" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " + std::to_string(b.x2) + ", " +
           std::to_string(b.y2) + "]";
}

} // namespace

std::string to_string(ToolName n)
{
    return n == ToolName::clip ? "clip" : "crop";
}

std::string to_string(Provenance p)
{
    switch (p) {
    case Provenance::synthesized: return "synthesized";
    case Provenance::edited: return "edited";
    case Provenance::model_rollout: return "model_rollout";
    }
    return "synthesized";
}

std::string to_string(ViolationKind k)
{
    switch (k) {
    case ViolationKind::grounding: return "grounding";
    case ViolationKind::temporal: return "temporal";
    case ViolationKind::correctness: return "correctness";
    case ViolationKind::format: return "format";
    }
    return "format";
}

ToolCall ToolCall::clip(std::vector<int> frames)
{
    ToolCall c;
    c.name = ToolName::clip;
    c.frames = std::move(frames);
    return c;
}

ToolCall ToolCall::crop(int frame, BoundingBox box)
{
    ToolCall c;
    c.name = ToolName::crop;
    c.frame = frame;
    c.box = box;
    return c;
}

bool ToolCall::operator==(const ToolCall& other) const
{
    if (name != other.name) return false;
    if (name == ToolName::clip) return frames == other.frames;
    return frame == other.frame && box == other.box;
}

ToolComposition tool_composition(const Trajectory& t)
{
    std::set<ToolName> names;
    for (const auto& turn : t.turns) {
        if (turn.tool_call) names.insert(turn.tool_call->name);
    }
    if (names.empty()) return ToolComposition::none;
    return names.size() == 1 ? ToolComposition::single_tool : ToolComposition::mixed;
}

bool is_drp_eligible(const Trajectory& t)
{
    return tool_composition(t) == ToolComposition::single_tool;
}

ordered_json tool_call_to_json(const ToolCall& call)
{
    ordered_json args;
    if (call.name == ToolName::clip) {
        args["frames"] = call.frames;
    } else {
        args["frame"] = call.frame;
        args["box"] = {call.box.x1, call.box.y1, call.box.x2, call.box.y2};
    }
    ordered_json j;
    j["name"] = to_string(call.name);
    j["arguments"] = std::move(args);
    return j;
}

ToolCall tool_call_from_json(const json& j)
{
    if (!j.is_object()) throw InputError("tool call must be an object");
    if (!j.contains("name") || !j.at("name").is_string()) throw InputError("tool call needs a string \"name\"");
    if (!j.contains("arguments") || !j.at("arguments").is_object()) {
        throw InputError("tool call needs an \"arguments\" object");
    }
    const auto name = j.at("name").get<std::string>();
    const auto& args = j.at("arguments");
    if (name == "clip") {
        if (args.size() != 1 || !args.contains("frames") || !args.at("frames").is_array()) {
            throw InputError("clip arguments must be {\"frames\": [indices]}");
        }
        std::vector<int> frames;
        std::set<int> seen;
        for (const auto& f : args.at("frames")) {
            if (!f.is_number_integer() || f.get<long long>() < 0) {
                throw InputError("clip frame indices must be nonnegative integers");
            }
            if (!seen.insert(f.get<int>()).second) throw InputError("clip frame indices must be distinct");
            frames.push_back(f.get<int>());
        }
        if (frames.empty()) throw InputError("clip needs at least one frame index");
        return ToolCall::clip(std::move(frames));
    }
    if (name == "crop") {
        if (args.size() != 2 || !args.contains("frame") || !args.contains("box")) {
            throw InputError("crop arguments must be {\"frame\": index, \"box\": [x1,y1,x2,y2]}");
        }
        const auto& f = args.at("frame");
        if (!f.is_number_integer() || f.get<long long>() < 0) {
            throw InputError("crop frame index must be a nonnegative integer");
        }
        return ToolCall::crop(f.get<int>(), box_from_json(args.at("box")));
    }
    throw InputError("unknown tool \"" + name + "\"");
}

std::string serialize_turn(const Turn& turn)
{
    if (turn.tool_call.has_value() == turn.final_answer.has_value()) {
        throw InputError("a turn carries exactly one of tool call or final answer");
    }
    for (auto reserved : kReservedInThink) {
        if (turn.think.find(reserved) != std::string::npos) {
            throw InputError("think text contains reserved marker " + std::string(reserved));
        }
    }
    std::string out;
    out += kThinkOpen;
    out += turn.think;
    out += kThinkClose;
    out += '\n';
    if (turn.tool_call) {
        out += kToolOpen;
        out += tool_call_to_json(*turn.tool_call).dump();
        out += kToolClose;
    } else {
        if (!balanced_braces(*turn.final_answer)) throw InputError("final answer has unbalanced braces");
        out += kBoxedOpen;
        out += *turn.final_answer;
        out += '}';
    }
    return out;
}

Turn parse_turn(std::string_view s)
{
    Turn turn;
    std::size_t pos = skip_ws(s, 0);

    if (s.substr(pos, kThinkOpen.size()) == kThinkOpen) {
        const std::size_t open = pos;
        const std::size_t body = pos + kThinkOpen.size();
        const std::size_t close = s.find(kThinkClose, body);
        if (close == std::string_view::npos) throw ParseError(open, "unbalanced <think> tag");
        const std::size_t nested = s.find(kThinkOpen, body);
        if (nested < close) throw ParseError(nested, "nested <think> tag");
        turn.think = std::string(s.substr(body, close - body));
        pos = skip_ws(s, close + kThinkClose.size());
    } else if (s.substr(pos, kThinkClose.size()) == kThinkClose) {
        throw ParseError(pos, "</think> without opening tag");
    }

    if (pos >= s.size()) throw ParseError(pos, "turn carries neither a tool call nor a boxed answer");

    if (s.substr(pos, kToolOpen.size()) == kToolOpen) {
        const std::size_t open = pos;
        const std::size_t body = pos + kToolOpen.size();
        const std::size_t close = s.find(kToolClose, body);
        if (close == std::string_view::npos) throw ParseError(open, "unbalanced <tool_call> tag");
        const std::size_t nested = s.find(kToolOpen, body);
        if (nested < close) throw ParseError(nested, "nested <tool_call> tag");
        const auto payload = s.substr(body, close - body);
        json j;
        try {
            j = json::parse(payload);
        } catch (const json::parse_error& e) {
            const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
            throw ParseError(body + std::min(at, payload.size()), std::string("invalid tool call JSON: ") + e.what());
        }
        try {
            turn.tool_call = tool_call_from_json(j);
        } catch (const InputError& e) {
            throw ParseError(body, std::string("invalid tool call arguments: ") + e.what());
        }
        pos = skip_ws(s, close + kToolClose.size());
    } else if (s.substr(pos, kBoxedOpen.size()) == kBoxedOpen) {
        const std::size_t open = pos;
        std::size_t i = pos + kBoxedOpen.size();
        int depth = 1;
        for (; i < s.size(); ++i) {
            if (s[i] == '{') ++depth;
            if (s[i] == '}' && --depth == 0) break;
        }
        if (depth != 0) throw ParseError(open, "unbalanced braces in \\boxed{}");
        const std::size_t body = open + kBoxedOpen.size();
        turn.final_answer = std::string(s.substr(body, i - body));
        pos = skip_ws(s, i + 1);
    } else if (s.substr(pos, kToolClose.size()) == kToolClose) {
        throw ParseError(pos, "</tool_call> without opening tag");
    } else {
        throw ParseError(pos, "expected <tool_call> or \\boxed{}");
    }

    if (pos < s.size()) {
        if (s.substr(pos, kBoxedOpen.size()) == kBoxedOpen) {
            throw ParseError(pos, turn.final_answer ? "multiple boxed answers in one turn"
                                                    : "turn has both a tool call and a boxed answer");
        }
        if (s.substr(pos, kToolOpen.size()) == kToolOpen) {
            throw ParseError(pos, turn.tool_call ? "multiple tool calls in one turn"
                                                 : "turn has both a tool call and a boxed answer");
        }
        throw ParseError(pos, "unexpected trailing text");
    }
    return turn;
}

ordered_json to_json(const Trajectory& t)
{
    ordered_json turns = ordered_json::array();
    for (const auto& turn : t.turns) {
        ordered_json jt;
        jt["think"] = turn.think;
        jt["tool_call"] = turn.tool_call ? tool_call_to_json(*turn.tool_call) : ordered_json(nullptr);
        jt["answer"] = turn.final_answer ? ordered_json(*turn.final_answer) : ordered_json(nullptr);
        turns.push_back(std::move(jt));
    }
    ordered_json j;
    j["id"] = t.id;
    j["instance_id"] = t.instance_id;
    j["provenance"] = to_string(t.provenance);
    j["forward_scan"] = t.forward_scan;
    j["turns"] = std::move(turns);
    return j;
}

Trajectory trajectory_from_json(const json& j)
{
    Trajectory t;
    try {
        t.id = j.at("id").get<std::string>();
        t.instance_id = j.at("instance_id").get<std::string>();
        const auto prov = j.at("provenance").get<std::string>();
        if (prov == "synthesized") {
            t.provenance = Provenance::synthesized;
        } else if (prov == "edited") {
            t.provenance = Provenance::edited;
        } else if (prov == "model_rollout") {
            t.provenance = Provenance::model_rollout;
        } else {
            throw InputError("unknown provenance \"" + prov + "\"");
        }
        t.forward_scan = j.value("forward_scan", true);
        const auto& turns = j.at("turns");
        if (!turns.is_array()) throw InputError("\"turns\" must be an array");
        for (std::size_t i = 0; i < turns.size(); ++i) {
            const auto& jt = turns[i];
            Turn turn;
            turn.think = jt.value("think", std::string());
            try {
                if (jt.contains("tool_call") && !jt.at("tool_call").is_null()) {
                    turn.tool_call = tool_call_from_json(jt.at("tool_call"));
                }
                if (jt.contains("answer") && !jt.at("answer").is_null()) {
                    turn.final_answer = jt.at("answer").get<std::string>();
                }
            } catch (const InputError& e) {
                throw InputError("turn " + std::to_string(i) + ": " + e.what());
            }
            t.turns.push_back(std::move(turn));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed trajectory: ") + e.what());
    }
    return t;
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw InputError("missing file: " + file.string());
    std::vector<Trajectory> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(trajectory_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw RecordError(file.string(), lineno, "<record>", e.what());
        } catch (const InputError& e) {
            throw RecordError(file.string(), lineno, "<record>", e.what());
        }
    }
    return out;
}

void write_trajectories(const std::filesystem::path& file, std::span<const Trajectory> trajectories)
{
    std::ofstream out(file);
    if (!out) throw InputError("cannot write " + file.string());
    for (const auto& t : trajectories) out << to_json(t).dump() << '\n';
}

namespace {

constexpr std::string_view kPlaceholders[] = {kVideoCaption, kClipCaption, kRegionCaption, kThink};

bool contains_placeholder(std::string_view s)
{
    return std::any_of(std::begin(kPlaceholders), std::end(kPlaceholders),
                       [&](std::string_view p) { return s.find(p) != std::string_view::npos; });
}

} // namespace

bool has_placeholders(const Trajectory& t)
{
    return std::any_of(t.turns.begin(), t.turns.end(), [](const Turn& turn) { return contains_placeholder(turn.think); });
}

std::vector<std::string> template_ids()
{
    return {"mixed", "crop_only", "clip_only"};
}

Trajectory render_trajectory(const evidence::EvidenceRecord& ev, const QAInstance& q, std::string_view template_id)
{
    if (!ev.matched) throw InputError("cannot render a trajectory for unmatched instance '" + ev.instance_id + "'");
    if (ev.instance_id != q.id) throw InputError("evidence record and instance ids differ");
    const bool use_clip = template_id == "mixed" || template_id == "clip_only";
    const bool use_crop = template_id == "mixed" || template_id == "crop_only";
    if (!use_clip && !use_crop) throw InputError("unknown template id '" + std::string(template_id) + "'");

    Trajectory t;
    t.id = q.id + "#" + std::string(template_id);
    t.instance_id = q.id;
    t.provenance = Provenance::synthesized;
    t.forward_scan = use_clip;

    const std::vector<int> frames(ev.relevant_frames.begin(), ev.relevant_frames.end());
    std::string_view pending_caption = kVideoCaption;

    if (use_clip) {
        Turn turn;
        turn.think = std::string(pending_caption) + " " + std::string(kThink) + " To locate the evidence I clip frame" +
                     (frames.size() == 1 ? " " : "s ") + join_ints(frames) + ".";
        turn.tool_call = ToolCall::clip(frames);
        t.turns.push_back(std::move(turn));
        pending_caption = kClipCaption;
    }
    if (use_crop) {
        for (const auto& [f, box] : ev.evidence_box_per_frame) {
            Turn turn;
            turn.think = std::string(pending_caption) + " " + std::string(kThink) + " Next I crop region " +
                         box_text(box) + " of frame " + std::to_string(f) + " to read it.";
            turn.tool_call = ToolCall::crop(f, box);
            t.turns.push_back(std::move(turn));
            pending_caption = kRegionCaption;
        }
    }
    Turn last;
    last.think = std::string(pending_caption) + " " + std::string(kThink) + " The gathered evidence answers the question.";
    last.final_answer = q.answers.front();
    t.turns.push_back(std::move(last));
    return t;
}

Trajectory fill_placeholders(const Trajectory& t, const Video& video, const QAInstance& q, CaptionerClient& client)
{
    Trajectory out = t;
    std::string context = "Question: " + q.question;
    const ToolCall* previous = nullptr;
    for (std::size_t i = 0; i < out.turns.size(); ++i) {
        auto& turn = out.turns[i];
        std::string& think = turn.think;
        try {
            auto replace = [&](std::string_view marker, auto&& produce) {
                for (std::size_t at = think.find(marker); at != std::string::npos; at = think.find(marker, at)) {
                    const std::string value = produce();
                    think.replace(at, marker.size(), value);
                    at += value.size();
                }
            };
            replace(kVideoCaption, [&] {
                std::vector<Frame> all;
                for (const auto& af : video.frames) all.push_back(af.frame);
                return client.caption_video(all);
            });
            replace(kClipCaption, [&] {
                if (previous == nullptr || previous->name != ToolName::clip) {
                    throw FillError(i, "clip caption without a preceding clip call");
                }
                return client.caption_video(select_frames(video, previous->frames));
            });
            replace(kRegionCaption, [&] {
                if (previous == nullptr || previous->name != ToolName::crop) {
                    throw FillError(i, "region caption without a preceding crop call");
                }
                return client.caption_region(video.frame(static_cast<std::size_t>(previous->frame)), previous->box,
                                             context);
            });
            replace(kThink, [&] { return client.think(context + "\n" + think); });
        } catch (const FillError&) {
            throw;
        } catch (const CaptionerError& e) {
            // Transport failures are not a property of this trajectory, so
            // they keep their type and only gain the turn.
            throw CaptionerError("turn " + std::to_string(i) + ": " + e.what());
        } catch (const std::exception& e) {
            throw FillError(i, e.what());
        }
        if (contains_placeholder(think)) throw FillError(i, "placeholder left after filling");
        context += "\n" + think;
        previous = turn.tool_call ? &*turn.tool_call : nullptr;
    }
    return out;
}

json to_json(const Violation& v)
{
    json j{{"kind", to_string(v.kind)}, {"message", v.message}};
    j["turn"] = v.turn ? json(*v.turn) : json(nullptr);
    return j;
}

bool ValidationReport::has(ViolationKind k) const
{
    return std::any_of(violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; });
}

ValidationReport validate_trajectory(const Trajectory& t, const Corpus& corpus, const evidence::EvidenceRecord& ev)
{
    ValidationReport report;
    auto add = [&](ViolationKind kind, std::optional<std::size_t> turn, std::string message) {
        report.violations.push_back(Violation{kind, turn, std::move(message)});
    };

    const QAInstance* q = corpus.find_instance(t.instance_id);
    const Video* video = nullptr;
    if (q == nullptr) {
        add(ViolationKind::grounding, std::nullopt, "unknown instance '" + t.instance_id + "'");
    } else {
        auto it = corpus.videos().find(q->video_ref);
        if (it != corpus.videos().end()) video = &it->second;
    }
    if (ev.instance_id != t.instance_id) {
        add(ViolationKind::grounding, std::nullopt,
            "evidence record is for '" + ev.instance_id + "', trajectory is for '" + t.instance_id + "'");
    }
    if (!ev.matched) add(ViolationKind::grounding, std::nullopt, "evidence record is unmatched");

    if (t.turns.empty()) {
        add(ViolationKind::format, std::nullopt, "trajectory has no turns");
        return report;
    }

    const ToolCall* previous_clip = nullptr;
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        const Turn& turn = t.turns[i];
        const bool last = i + 1 == t.turns.size();

        try {
            parse_turn(serialize_turn(turn));
        } catch (const Error& e) {
            add(ViolationKind::format, i, e.what());
        }
        if (contains_placeholder(turn.think)) add(ViolationKind::format, i, "unfilled placeholder");
        if (turn.final_answer && !last) add(ViolationKind::format, i, "final answer before the last turn");
        if (last && !turn.final_answer) add(ViolationKind::format, i, "last turn has no final answer");

        if (!turn.tool_call) continue;
        const ToolCall& call = *turn.tool_call;
        if (call.name == ToolName::clip) {
            for (int f : call.frames) {
                if (video != nullptr && (f < 0 || static_cast<std::size_t>(f) >= video->frame_count())) {
                    add(ViolationKind::grounding, i, "clip frame " + std::to_string(f) + " is outside the video");
                } else if (!ev.relevant_frames.contains(f)) {
                    add(ViolationKind::grounding, i, "clip frame " + std::to_string(f) + " is not in the evidence");
                }
            }
            if (t.forward_scan) {
                if (!std::is_sorted(call.frames.begin(), call.frames.end())) {
                    add(ViolationKind::temporal, i, "clip frames are not in ascending order");
                }
                if (previous_clip != nullptr && !call.frames.empty() && !previous_clip->frames.empty()) {
                    const auto [lo, hi] = std::minmax_element(call.frames.begin(), call.frames.end());
                    const auto [plo, phi] = std::minmax_element(previous_clip->frames.begin(), previous_clip->frames.end());
                    if (*lo < *plo || *hi < *phi) {
                        add(ViolationKind::temporal, i, "clip window moves backward in time");
                    }
                }
            }
            previous_clip = &call;
        } else {
            if (video != nullptr) {
                if (call.frame < 0 || static_cast<std::size_t>(call.frame) >= video->frame_count()) {
                    add(ViolationKind::grounding, i, "crop frame " + std::to_string(call.frame) + " is outside the video");
                    continue;
                }
                const Frame& fr = video->frame(static_cast<std::size_t>(call.frame));
                if (!call.box.fits(fr.width, fr.height)) {
                    add(ViolationKind::grounding, i, "crop box " + box_text(call.box) + " exceeds the frame");
                }
            }
            auto it = ev.evidence_box_per_frame.find(call.frame);
            if (!ev.relevant_frames.contains(call.frame) || it == ev.evidence_box_per_frame.end()) {
                add(ViolationKind::grounding, i, "crop frame " + std::to_string(call.frame) + " is not in the evidence");
            } else if (!it->second.contains(call.box)) {
                add(ViolationKind::grounding, i,
                    "crop box " + box_text(call.box) + " is outside evidence box " + box_text(it->second));
            }
        }
    }

    const Turn& final_turn = t.turns.back();
    if (q != nullptr && final_turn.final_answer) {
        const auto pred = text::normalize_answer(*final_turn.final_answer);
        const bool correct = std::any_of(q->answers.begin(), q->answers.end(),
                                         [&](const std::string& a) { return text::normalize_answer(a) == pred; });
        if (!correct) {
            add(ViolationKind::correctness, t.turns.size() - 1,
                "final answer \"" + *final_turn.final_answer + "\" matches no gold answer");
        }
    }
    return report;
}

} // namespace vr4::trajectory
