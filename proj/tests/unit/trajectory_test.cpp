#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "vr4/captioner.hpp"
#include "vr4/evidence.hpp"
#include "vr4/trajectory.hpp"

using namespace vr4;
using namespace vr4::trajectory;
namespace tk = vr4::testkit;
using nlohmann::json;
using tk::Rng;

namespace {

std::size_t parse_error_offset(std::string_view text)
{
    try {
        parse_turn(text);
    } catch (const ParseError& e) {
        return e.offset();
    }
    ADD_FAILURE() << "no parse error for: " << text;
    return std::string::npos;
}

evidence::EvidenceRecord evidence_for(const Corpus& corpus, const std::string& id)
{
    return evidence::match_question(corpus.instance(id), corpus, {});
}

Trajectory rendered_and_filled(const Corpus& corpus, const std::string& id, std::string_view tmpl = "mixed")
{
    const auto& q = corpus.instance(id);
    StubCaptioner stub;
    return fill_placeholders(render_trajectory(evidence_for(corpus, id), q, tmpl), corpus.video(q.video_ref), q, stub);
}

class ScriptedClient : public CaptionerClient {
public:
    explicit ScriptedClient(int fail_on_think, bool transport = false)
        : fail_on_think_(fail_on_think), transport_(transport) {}

    std::string caption_video(std::span<const Frame> frames) override
    {
        return "video of " + std::to_string(frames.size()) + " frames";
    }
    std::string caption_region(const Frame& frame, const BoundingBox&, std::string_view) override
    {
        return "region of frame " + std::to_string(frame.index);
    }
    std::string think(std::string_view) override
    {
        if (calls_++ == fail_on_think_) {
            if (transport_) throw CaptionerError("connection reset");
            throw std::runtime_error("model refused");
        }
        return "thinking";
    }

private:
    int fail_on_think_;
    bool transport_;
    int calls_ = 0;
};

// Minimal captioner service. Replies {"text": "<path>:<n>"} where n counts
// the frames (or 1 for a region/think request).
class MockCaptionService {
public:
    MockCaptionService()
    {
        auto handler = [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            {
                std::lock_guard lock(mu_);
                bodies_.push_back(body);
            }
            if (fail_.load()) {
                res.status = 503;
                return;
            }
            if (garbage_.load()) {
                res.set_content("not json", "text/plain");
                return;
            }
            const std::size_t n = body.contains("frames") ? body["frames"].size() : 1;
            res.set_content(json{{"text", req.path + ":" + std::to_string(n)}}.dump(), "application/json");
        };
        server_.Post("/caption_video", handler);
        server_.Post("/caption_region", handler);
        server_.Post("/think", handler);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockCaptionService()
    {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    void fail(bool on) { fail_ = on; }
    void garbage(bool on) { garbage_ = on; }
    std::vector<json> bodies()
    {
        std::lock_guard lock(mu_);
        return bodies_;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<bool> fail_{false};
    std::atomic<bool> garbage_{false};
    std::mutex mu_;
    std::vector<json> bodies_;
};

} // namespace

TEST(WireFormat, ParsesBareFrameListClip)
{
    const auto turn = parse_turn(R"(<think>scan</think>
<tool_call>{"name":"clip","arguments":{"frames":[0,2]}}</tool_call>)");
    ASSERT_TRUE(turn.tool_call);
    EXPECT_EQ(turn.tool_call->name, ToolName::clip);
    EXPECT_EQ(turn.tool_call->frames, (std::vector<int>{0, 2}));
    EXPECT_EQ(turn.think, "scan");
    EXPECT_FALSE(turn.final_answer);
}

TEST(WireFormat, ParsesBoxedAnswer)
{
    const auto turn = parse_turn("<think>so</think>\n\\boxed{42}");
    ASSERT_TRUE(turn.final_answer);
    EXPECT_EQ(*turn.final_answer, "42");
    EXPECT_EQ(parse_turn("\\boxed{a {b} c}").final_answer, "a {b} c");
    EXPECT_EQ(parse_turn("  \\boxed{}  ").think, "");
}

TEST(WireFormat, CropRoundTrips)
{
    Turn t;
    t.think = "read the sign";
    t.tool_call = ToolCall::crop(3, {1, 2, 30, 40});
    const auto wire = serialize_turn(t);
    EXPECT_EQ(wire, "<think>read the sign</think>\n<tool_call>{\"name\":\"crop\",\"arguments\":{\"frame\":3,\"box\":[1,2,30,40]}}</tool_call>");
    EXPECT_EQ(parse_turn(wire), t);
}

TEST(WireFormat, RandomTrajectoriesRoundTrip)
{
    Rng rng(23);
    for (int i = 0; i < 500; ++i) {
        const auto t = tk::random_trajectory(rng, rng.between(1, 12), rng.between(8, 64), rng.between(8, 64));
        Trajectory back = t;
        back.turns.clear();
        for (const auto& turn : t.turns) back.turns.push_back(parse_turn(serialize_turn(turn)));
        ASSERT_EQ(back, t) << "case " << i;
        ASSERT_EQ(trajectory_from_json(json::parse(to_json(t).dump())), t) << "case " << i;
    }
}

TEST(WireFormat, SerializeRejectsUnrepresentableTurns)
{
    Turn both;
    both.tool_call = ToolCall::clip({0});
    both.final_answer = "x";
    EXPECT_THROW(serialize_turn(both), InputError);
    EXPECT_THROW(serialize_turn(Turn{}), InputError);
    Turn marker;
    marker.think = "see </think> here";
    marker.final_answer = "x";
    EXPECT_THROW(serialize_turn(marker), InputError);
    Turn braces;
    braces.final_answer = "a}b{";
    EXPECT_THROW(serialize_turn(braces), InputError);
}

TEST(WireFormat, ParseErrorsCarryOffsets)
{
    EXPECT_EQ(parse_error_offset("<think>abc"), 0u);
    EXPECT_EQ(parse_error_offset("  </think>"), 2u);
    EXPECT_EQ(parse_error_offset("<think>a</think>\n"), 17u);
    EXPECT_EQ(parse_error_offset("<think>a</think><tool_call>{\"name\":\"clip\"}"), 16u);
    EXPECT_EQ(parse_error_offset("<think>a</think>\\boxed{1}\\boxed{2}"), 25u);
    EXPECT_EQ(parse_error_offset("<think>a</think>\\boxed{1} tail"), 26u);
    EXPECT_EQ(parse_error_offset("<think>a <think>b</think>\\boxed{1}"), 9u);
    EXPECT_EQ(parse_error_offset("\\boxed{a{b}"), 0u);
    EXPECT_EQ(parse_error_offset("</tool_call>"), 0u);
    EXPECT_EQ(parse_error_offset("hello"), 0u);
    const std::string call_then_box = R"(<tool_call>{"name":"clip","arguments":{"frames":[0]}}</tool_call>\boxed{1})";
    EXPECT_EQ(parse_error_offset(call_then_box), call_then_box.find("\\boxed"));
    // Offset lands inside the JSON payload, which starts at byte 11.
    const std::string bad_json = "<tool_call>{\"name\": nope}</tool_call>";
    const auto at = parse_error_offset(bad_json);
    EXPECT_GE(at, 11u);
    EXPECT_LT(at, bad_json.find("</tool_call>"));
    EXPECT_EQ(parse_error_offset(R"(<tool_call>{"name":"clip","arguments":{"frames":[]}}</tool_call>)"), 11u);
    EXPECT_EQ(parse_error_offset(R"(<tool_call>{"name":"zoom","arguments":{}}</tool_call>)"), 11u);
    EXPECT_EQ(parse_error_offset(R"(<tool_call>{"name":"crop","arguments":{"frame":0,"box":[5,5,1,1]}}</tool_call>)"), 11u);
}

TEST(ToolCallJson, ArgumentShapes)
{
    EXPECT_EQ(tool_call_from_json(json::parse(R"({"name":"crop","arguments":{"frame":2,"box":[0,0,4,4]}})")),
              ToolCall::crop(2, {0, 0, 4, 4}));
    EXPECT_THROW(tool_call_from_json(json::parse(R"({"name":"clip","arguments":{"frames":[1,1]}})")), InputError);
    EXPECT_THROW(tool_call_from_json(json::parse(R"({"name":"clip","arguments":{"frames":[-1]}})")), InputError);
    EXPECT_THROW(tool_call_from_json(json::parse(R"({"name":"crop","arguments":{"frame":-1,"box":[0,0,4,4]}})")),
                 InputError);
    EXPECT_THROW(tool_call_from_json(json::parse(R"({"arguments":{}})")), InputError);
    EXPECT_THROW(tool_call_from_json(json::parse("[]")), InputError);
}

TEST(ToolComposition, DrpEligibility)
{
    Trajectory t;
    Turn answer;
    answer.final_answer = "x";
    t.turns = {answer};
    EXPECT_EQ(tool_composition(t), ToolComposition::none);
    EXPECT_FALSE(is_drp_eligible(t));

    Turn crop;
    crop.tool_call = ToolCall::crop(0, {0, 0, 1, 1});
    Turn clip;
    clip.tool_call = ToolCall::clip({0});
    t.turns = {crop, crop, answer};
    EXPECT_EQ(tool_composition(t), ToolComposition::single_tool);
    EXPECT_TRUE(is_drp_eligible(t));
    t.turns = {clip, answer};
    EXPECT_TRUE(is_drp_eligible(t));
    t.turns = {clip, crop, answer};
    EXPECT_EQ(tool_composition(t), ToolComposition::mixed);
    EXPECT_FALSE(is_drp_eligible(t));
}

TEST(ToolComposition, RandomTrajectoriesClassifyByDistinctNames)
{
    Rng rng(8);
    for (int i = 0; i < 500; ++i) {
        const auto t = tk::random_trajectory(rng, 6, 32, 32);
        std::set<ToolName> names;
        for (const auto& turn : t.turns) {
            if (turn.tool_call) names.insert(turn.tool_call->name);
        }
        EXPECT_EQ(is_drp_eligible(t), names.size() == 1);
        EXPECT_EQ(tool_composition(t) == ToolComposition::mixed, names.size() == 2);
    }
}

TEST(Render, SingleFrameTextIsThreeTurns)
{
    const auto corpus = tk::fixture_corpus(3, 3);
    const auto& q = corpus.instance("q000");
    const auto ev = evidence_for(corpus, "q000");
    ASSERT_EQ(ev.relevant_frames.size(), 1u);
    const auto t = render_trajectory(ev, q, "crop_only");
    ASSERT_EQ(t.turns.size(), 2u);
    const auto mixed = render_trajectory(ev, q, "mixed");
    ASSERT_EQ(mixed.turns.size(), 3u);
    EXPECT_EQ(mixed.turns[0].tool_call->name, ToolName::clip);
    EXPECT_EQ(*mixed.turns[1].tool_call, ToolCall::crop(0, ev.evidence_box_per_frame.at(0)));
    EXPECT_EQ(mixed.turns[2].final_answer, q.answers.front());
    EXPECT_TRUE(has_placeholders(mixed));
    EXPECT_EQ(mixed.id, "q000#mixed");
    EXPECT_EQ(mixed.provenance, Provenance::synthesized);
}

TEST(Render, MultiFrameOpensWithClip)
{
    QAInstance q{"q", "v", "Which?", {"gate"}, TemporalSource::multi_frame, ModalitySource::text};
    evidence::EvidenceRecord ev;
    ev.instance_id = "q";
    ev.matched = true;
    ev.relevant_frames = {1, 4};
    ev.text_box_per_frame = {{1, {0, 0, 5, 5}}, {4, {2, 2, 9, 9}}};
    ev.evidence_box_per_frame = ev.text_box_per_frame;
    const auto t = render_trajectory(ev, q);
    ASSERT_EQ(t.turns.size(), 4u);
    EXPECT_EQ(*t.turns[0].tool_call, ToolCall::clip({1, 4}));
    EXPECT_EQ(*t.turns[1].tool_call, ToolCall::crop(1, {0, 0, 5, 5}));
    EXPECT_EQ(*t.turns[2].tool_call, ToolCall::crop(4, {2, 2, 9, 9}));
    EXPECT_EQ(*t.turns[3].final_answer, "gate");
    EXPECT_TRUE(t.forward_scan);

    const auto clip_only = render_trajectory(ev, q, "clip_only");
    ASSERT_EQ(clip_only.turns.size(), 2u);
    EXPECT_TRUE(is_drp_eligible(clip_only));
}

TEST(Render, Errors)
{
    const auto corpus = tk::fixture_corpus(2, 1);
    EXPECT_THROW(render_trajectory(evidence_for(corpus, "q001"), corpus.instance("q001")), InputError);
    EXPECT_THROW(render_trajectory(evidence_for(corpus, "q000"), corpus.instance("q000"), "zigzag"), InputError);
    EXPECT_THROW(render_trajectory(evidence_for(corpus, "q000"), corpus.instance("q001")), InputError);
}

TEST(Render, FilledTrajectoriesValidateCleanly)
{
    const auto corpus = tk::fixture_corpus(12, 12, 4);
    for (const auto& q : corpus.instances()) {
        const auto ev = evidence_for(corpus, q.id);
        ASSERT_TRUE(ev.matched);
        for (const auto& tmpl : template_ids()) {
            const auto raw = render_trajectory(ev, q, tmpl);
            // Before filling, the only complaints are the placeholders.
            for (const auto& v : validate_trajectory(raw, corpus, ev).violations) {
                EXPECT_EQ(v.kind, ViolationKind::format);
                EXPECT_EQ(v.message, "unfilled placeholder");
            }
            const auto filled = rendered_and_filled(corpus, q.id, tmpl);
            const auto report = validate_trajectory(filled, corpus, ev);
            EXPECT_TRUE(report.ok()) << q.id << " " << tmpl << ": " << report.violations.front().message;
            EXPECT_EQ(is_drp_eligible(filled), tmpl != "mixed");
        }
    }
}

TEST(Render, RandomCorporaValidateCleanly)
{
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Rng rng(seed);
        const auto corpus = tk::random_match_corpus(rng);
        for (const auto& q : corpus.instances()) {
            const auto ev = evidence::match_question(q, corpus, {});
            if (!ev.matched) continue;
            StubCaptioner stub;
            const auto t = fill_placeholders(render_trajectory(ev, q), corpus.video(q.video_ref), q, stub);
            const auto report = validate_trajectory(t, corpus, ev);
            ASSERT_TRUE(report.ok()) << "seed " << seed << " " << q.id << ": " << report.violations.front().message;
        }
    }
}

TEST(Fill, StubIsDeterministicAndKeepsStructure)
{
    const auto corpus = tk::fixture_corpus(4, 4);
    const auto& q = corpus.instance("q001");
    const auto raw = render_trajectory(evidence_for(corpus, "q001"), q);
    const auto a = rendered_and_filled(corpus, "q001");
    const auto b = rendered_and_filled(corpus, "q001");
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_FALSE(has_placeholders(a));
    ASSERT_EQ(a.turns.size(), raw.turns.size());
    for (std::size_t i = 0; i < a.turns.size(); ++i) {
        EXPECT_EQ(a.turns[i].tool_call, raw.turns[i].tool_call);
        EXPECT_EQ(a.turns[i].final_answer, raw.turns[i].final_answer);
    }
    EXPECT_NE(a.turns[1].think.find("The frames 1, 2 have mean intensities"), std::string::npos);
}

TEST(Fill, NoPlaceholdersIsIdentity)
{
    const auto corpus = tk::fixture_corpus(1, 1);
    const auto& q = corpus.instance("q000");
    Trajectory t;
    t.id = "x";
    t.instance_id = "q000";
    Turn turn;
    turn.think = "nothing to fill";
    turn.final_answer = "ansaa";
    t.turns = {turn};
    ScriptedClient client(0);
    EXPECT_EQ(fill_placeholders(t, corpus.video(q.video_ref), q, client), t);
}

TEST(Fill, ClientFailureNamesTheTurn)
{
    const auto corpus = tk::fixture_corpus(1, 1);
    const auto& q = corpus.instance("q000");
    const auto raw = render_trajectory(evidence_for(corpus, "q000"), q);
    ASSERT_EQ(raw.turns.size(), 3u);
    ScriptedClient client(2);
    try {
        fill_placeholders(raw, corpus.video(q.video_ref), q, client);
        FAIL();
    } catch (const FillError& e) {
        EXPECT_EQ(e.turn(), 2u);
        EXPECT_NE(std::string(e.what()).find("turn 2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("model refused"), std::string::npos);
    }
    ScriptedClient transport(1, true);
    try {
        fill_placeholders(raw, corpus.video(q.video_ref), q, transport);
        FAIL();
    } catch (const CaptionerError& e) {
        EXPECT_NE(std::string(e.what()).find("turn 1"), std::string::npos);
    }
}

TEST(Fill, MisplacedCaptionSlotIsAnError)
{
    const auto corpus = tk::fixture_corpus(1, 1);
    const auto& q = corpus.instance("q000");
    Trajectory t;
    Turn turn;
    turn.think = std::string(kRegionCaption);
    turn.final_answer = "x";
    t.turns = {turn};
    StubCaptioner stub;
    try {
        fill_placeholders(t, corpus.video(q.video_ref), q, stub);
        FAIL();
    } catch (const FillError& e) {
        EXPECT_EQ(e.turn(), 0u);
    }
}

TEST(Validate, GroundingViolations)
{
    const auto corpus = tk::fixture_corpus(1, 1, 8);
    const auto& q = corpus.instance("q000");
    evidence::EvidenceRecord ev;
    ev.instance_id = q.id;
    ev.matched = true;
    ev.relevant_frames = {3};
    ev.text_box_per_frame = {{3, {8, 8, 28, 16}}};
    ev.evidence_box_per_frame = ev.text_box_per_frame;

    Trajectory t;
    t.instance_id = q.id;
    Turn crop;
    crop.tool_call = ToolCall::crop(7, {8, 8, 28, 16});
    Turn answer;
    answer.final_answer = q.answers.front();
    t.turns = {crop, answer};
    auto report = validate_trajectory(t, corpus, ev);
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].kind, ViolationKind::grounding);
    EXPECT_EQ(report.violations[0].turn, 0u);

    t.turns[0].tool_call = ToolCall::crop(3, {0, 0, 28, 16});
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).has(ViolationKind::grounding));
    t.turns[0].tool_call = ToolCall::crop(3, {10, 9, 20, 15});
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).ok());
    t.turns[0].tool_call = ToolCall::crop(3, {10, 9, 60, 15});
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).has(ViolationKind::grounding));
    t.turns[0].tool_call = ToolCall::clip({3, 12});
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).has(ViolationKind::grounding));

    t.instance_id = "nobody";
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).has(ViolationKind::grounding));
}

TEST(Validate, TemporalViolationsUnderForwardScan)
{
    const auto corpus = tk::fixture_corpus(1, 1, 8);
    const auto& q = corpus.instance("q000");
    evidence::EvidenceRecord ev;
    ev.instance_id = q.id;
    ev.matched = true;
    ev.relevant_frames = {1, 2, 5};
    Trajectory t;
    t.instance_id = q.id;
    Turn c1;
    c1.tool_call = ToolCall::clip({5, 2});
    Turn answer;
    answer.final_answer = q.answers.front();
    t.turns = {c1, answer};
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).has(ViolationKind::temporal));
    t.forward_scan = false;
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).ok());

    t.forward_scan = true;
    Turn c2;
    c2.tool_call = ToolCall::clip({2, 5});
    Turn c3;
    c3.tool_call = ToolCall::clip({1});
    t.turns = {c2, c3, answer};
    auto report = validate_trajectory(t, corpus, ev);
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].kind, ViolationKind::temporal);
    EXPECT_EQ(report.violations[0].turn, 1u);
    t.turns = {c3, c2, answer};
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).ok());
}

TEST(Validate, CorrectnessAndFormat)
{
    QAInstance q{"q", "v", "Is it open?", {"no"}, TemporalSource::single_frame, ModalitySource::text};
    Video v;
    v.ref = "v";
    v.frames.push_back({Frame{0, 4, 4, std::vector<std::uint8_t>(16)}, {}, {}});
    std::map<std::string, Video> videos;
    videos.emplace("v", v);
    const Corpus corpus(std::move(videos), {q});
    evidence::EvidenceRecord ev;
    ev.instance_id = "q";
    ev.matched = true;
    ev.relevant_frames = {0};

    Trajectory t;
    t.instance_id = "q";
    Turn answer;
    answer.final_answer = "yes";
    t.turns = {answer};
    auto report = validate_trajectory(t, corpus, ev);
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].kind, ViolationKind::correctness);

    t.turns[0].final_answer = "  NO ";
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).ok());

    Turn early;
    early.final_answer = "no";
    Turn clip;
    clip.tool_call = ToolCall::clip({0});
    t.turns = {early, clip};
    report = validate_trajectory(t, corpus, ev);
    EXPECT_TRUE(report.has(ViolationKind::format));

    t.turns = {};
    EXPECT_TRUE(validate_trajectory(t, corpus, ev).has(ViolationKind::format));

    Turn bad;
    bad.think = "<tool_call>";
    bad.final_answer = "no";
    t.turns = {bad};
    report = validate_trajectory(t, corpus, ev);
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].kind, ViolationKind::format);
    EXPECT_EQ(to_json(report.violations[0])["kind"], "format");
}

TEST(TrajectoryIo, FileRoundTripAndErrors)
{
    Rng rng(12);
    std::vector<Trajectory> ts;
    for (int i = 0; i < 20; ++i) ts.push_back(tk::random_trajectory(rng, 5, 20, 20));
    tk::TempDir dir;
    write_trajectories(dir / "t.jsonl", ts);
    EXPECT_EQ(load_trajectories(dir / "t.jsonl"), ts);

    auto doc = to_json(ts[0]);
    doc["provenance"] = "dreamed";
    tk::write_file(dir / "bad.jsonl", tk::read_file(dir / "t.jsonl") + doc.dump() + "\n");
    try {
        load_trajectories(dir / "bad.jsonl");
        FAIL();
    } catch (const RecordError& e) {
        EXPECT_EQ(e.line(), 21u);
    }
    EXPECT_THROW(load_trajectories(dir / "none.jsonl"), InputError);
}

TEST(StubCaptioner, DescribesFramesAndRegions)
{
    Frame f{2, 4, 2, {0, 0, 100, 100, 0, 0, 100, 100}};
    StubCaptioner stub;
    const std::vector<Frame> one{f};
    EXPECT_EQ(stub.caption_video(one), "The frame 2 has mean intensity 50.0.");
    EXPECT_EQ(stub.caption_region(f, {2, 0, 4, 2}, ""),
              "The region [2, 0, 4, 2] of frame 2 has mean intensity 100.0 and contrast 0.0.");
    EXPECT_EQ(stub.think("abc"), stub.think("abc"));
    EXPECT_EQ(stub.caption_video(std::vector<Frame>{}), "No frames are visible.");
}

TEST(HttpCaptioner, TalksToService)
{
    MockCaptionService service;
    HttpCaptioner client(service.url(), 2000);
    Rng rng(1);
    const std::vector<Frame> frames{tk::noise_frame(rng, 0, 6, 4), tk::noise_frame(rng, 3, 6, 4)};
    EXPECT_EQ(client.caption_video(frames), "/caption_video:2");
    EXPECT_EQ(client.caption_region(frames[1], {1, 1, 3, 3}, "ctx"), "/caption_region:1");
    EXPECT_EQ(client.think("why"), "/think:1");

    const auto bodies = service.bodies();
    ASSERT_EQ(bodies.size(), 3u);
    EXPECT_EQ(bodies[0]["frames"][1]["index"], 3);
    EXPECT_EQ(bodies[0]["frames"][1]["width"], 6);
    EXPECT_FALSE(bodies[0]["frames"][1]["png_base64"].get<std::string>().empty());
    EXPECT_EQ(bodies[1]["box"], json::parse("[1,1,3,3]"));
    EXPECT_EQ(bodies[1]["context"], "ctx");
    EXPECT_EQ(bodies[2]["context"], "why");

    service.fail(true);
    EXPECT_THROW(client.think("x"), CaptionerError);
    service.fail(false);
    service.garbage(true);
    EXPECT_THROW(client.think("x"), CaptionerError);
}

TEST(HttpCaptioner, FillsTrajectoryEndToEnd)
{
    MockCaptionService service;
    const auto corpus = tk::fixture_corpus(2, 2);
    const auto& q = corpus.instance("q001");
    auto client = make_captioner("http", service.url(), 2000);
    const auto t = fill_placeholders(render_trajectory(evidence_for(corpus, q.id), q), corpus.video(q.video_ref), q,
                                     *client);
    EXPECT_FALSE(has_placeholders(t));
    EXPECT_NE(t.turns[0].think.find("/caption_video:3"), std::string::npos);
    EXPECT_NE(t.turns[1].think.find("/caption_video:2"), std::string::npos);
}

TEST(HttpCaptioner, UnreachableServiceIsCaptionerError)
{
    std::string url;
    {
        MockCaptionService gone;
        url = gone.url();
    }
    HttpCaptioner client(url, 500);
    try {
        client.think("x");
        FAIL();
    } catch (const CaptionerError& e) {
        EXPECT_NE(std::string(e.what()).find("unreachable"), std::string::npos);
    }
    EXPECT_THROW(make_captioner("carrier-pigeon", "", 10), InputError);
    EXPECT_THROW(make_captioner("http", "", 10), InputError);
    EXPECT_NE(make_captioner("stub", "", 10), nullptr);
}
