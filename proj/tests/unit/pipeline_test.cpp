#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cli.hpp"
#include "generators.hpp"
#include "vr4/config.hpp"
#include "vr4/error.hpp"
#include "vr4/pipeline.hpp"
#include "vr4/trajectory.hpp"

namespace tk = vr4::testkit;
using namespace vr4;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::size_t line_count(const fs::path& file)
{
    std::ifstream in(file);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

// Fixture corpus on disk plus a config pointing at it.
struct Workspace {
    tk::TempDir dir;
    config::PipelineConfig cfg;

    explicit Workspace(std::size_t instances = 10, std::size_t matchable = 7)
    {
        save_corpus(tk::fixture_corpus(instances, matchable), dir / "corpus");
        cfg.corpus_root = dir / "corpus";
        cfg.out_dir = dir / "out";
    }
};

// Stub text, except that one chosen `think` call fails outright.
class FlakyClient final : public CaptionerClient {
public:
    explicit FlakyClient(int fail_at) : fail_at_(fail_at) {}

    std::string caption_video(std::span<const Frame> frames) override { return stub_.caption_video(frames); }
    std::string caption_region(const Frame& frame, const BoundingBox& box, std::string_view context) override
    {
        return stub_.caption_region(frame, box, context);
    }
    std::string think(std::string_view context) override
    {
        if (++calls_ == fail_at_) throw std::runtime_error("model refused");
        return stub_.think(context);
    }

private:
    StubCaptioner stub_;
    int fail_at_;
    int calls_ = 0;
};

class DownClient final : public CaptionerClient {
public:
    std::string caption_video(std::span<const Frame>) override { throw CaptionerError("service unreachable"); }
    std::string caption_region(const Frame&, const BoundingBox&, std::string_view) override
    {
        throw CaptionerError("service unreachable");
    }
    std::string think(std::string_view) override { throw CaptionerError("service unreachable"); }
};

config::PipelineConfig tiny_training(config::PipelineConfig cfg)
{
    auto& t = cfg.training;
    t.drp_crop_demos = 4;
    t.drp_clip_demos = 3;
    t.crp_demos = 5;
    t.rl_instances = 6;
    t.eval_instances = 4;
    t.grpo.group_size = 4;
    t.grpo.batch_size = 2;
    for (auto& s : cfg.plan.stages) s.steps = 2;
    return cfg;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args, std::map<std::string, std::string> env = {})
{
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, env, out, err);
    return {code, out.str(), err.str()};
}

} // namespace

// ---- config ----

TEST(Config, DefaultsRoundTrip)
{
    const config::PipelineConfig cfg;
    const auto j = config::to_json(cfg);
    EXPECT_EQ(config::to_json(config::config_from_json(j)), j);
    EXPECT_EQ(config::to_json(config::config_from_json(json::object())), j);
    for (const auto* section : {"paths", "matcher", "synthesis", "captioner", "reward", "grpo", "training", "plan", "qc",
                                "seed"}) {
        EXPECT_TRUE(j.contains(section)) << section;
    }
}

TEST(Config, EnvironmentOverridesNestAndParse)
{
    const std::map<std::string, std::string> env{{"VIDEOR4_GRPO__CLIP_EPSILON", "0.3"},
                                                 {"VIDEOR4_SYNTHESIS__TEMPLATE", "crop_only"},
                                                 {"VIDEOR4_SEED", "17"},
                                                 {"VIDEOR4_MATCHER__TEXT_MATCH_THRESHOLD", "0.7"},
                                                 {"HOME", "/root"},
                                                 {"VIDEOR4_", "ignored"}};
    const auto doc = config::apply_env_overrides(json::object(), env);
    EXPECT_EQ(doc.at("grpo").at("clip_epsilon"), 0.3);
    EXPECT_EQ(doc.at("synthesis").at("template"), "crop_only");
    EXPECT_EQ(doc.at("seed"), 17);
    EXPECT_FALSE(doc.contains("home"));
    const auto cfg = config::config_from_json(doc);
    EXPECT_DOUBLE_EQ(cfg.training.grpo.clip_epsilon, 0.3);
    EXPECT_EQ(cfg.template_id, "crop_only");
    EXPECT_EQ(cfg.seed, 17u);

    EXPECT_THROW(config::apply_env_overrides(json::object(), {{"VIDEOR4_GRPO____X", "1"}}), InputError);
    // A scalar in the way of a nested key.
    EXPECT_THROW(config::apply_env_overrides(json{{"seed", 1}}, {{"VIDEOR4_SEED__X", "1"}}), InputError);
}

TEST(Config, FlagsBeatEnvironmentBeatsFile)
{
    tk::TempDir dir;
    tk::write_file(dir / "cfg.json", R"({"seed": 1, "qc": {"port": 9000, "reviewer": "ann"}})");
    const std::map<std::string, std::string> env{{"VIDEOR4_SEED", "2"}, {"VIDEOR4_QC__PORT", "9001"}};

    EXPECT_EQ(config::resolve_config(dir / "cfg.json", {}, json::object()).seed, 1u);
    auto cfg = config::resolve_config(dir / "cfg.json", env, json::object());
    EXPECT_EQ(cfg.seed, 2u);
    EXPECT_EQ(cfg.qc.port, 9001);
    EXPECT_EQ(cfg.qc.reviewer, "ann");
    cfg = config::resolve_config(dir / "cfg.json", env, json{{"seed", 3}});
    EXPECT_EQ(cfg.seed, 3u);
    EXPECT_EQ(cfg.qc.port, 9001);
    EXPECT_EQ(config::resolve_config({}, {}, json::object()).seed, 0u);
}

TEST(Config, RejectsBadDocuments)
{
    tk::TempDir dir;
    EXPECT_THROW(config::load_config_document(dir / "absent.json"), InputError);
    tk::write_file(dir / "broken.json", "{\"seed\": ");
    EXPECT_THROW(config::load_config_document(dir / "broken.json"), InputError);

    const std::vector<json> bad{
        json::array(),
        {{"captioner", {{"kind", "gpt"}}}},
        {{"captioner", {{"kind", "http"}}}},
        {{"captioner", {{"timeout_ms", 0}}}},
        {{"qc", {{"port", 70000}}}},
        {{"synthesis", {{"template", "zoom_only"}}}},
        {{"seed", -1}},
        {{"seed", "one"}},
        {{"paths", "here"}},
        {{"grpo", {{"clip_epsilon", -0.2}}}},
        {{"matcher", {{"text_match_threshold", 2.0}}}},
        {{"plan", json::array({"RL_x"})}},
        {{"qc", {{"port", "eighty"}}}},
    };
    for (const auto& doc : bad) EXPECT_THROW(config::config_from_json(doc), InputError) << doc.dump();
}

TEST(Config, HashTracksContent)
{
    config::PipelineConfig a;
    config::PipelineConfig b;
    EXPECT_EQ(config::config_hash(a), config::config_hash(b));
    b.seed = 1;
    EXPECT_NE(config::config_hash(a), config::config_hash(b));
    b = a;
    b.training.grpo.kl_coef = 0.05;
    EXPECT_NE(config::config_hash(a), config::config_hash(b));
}

// ---- pipeline commands ----

TEST(Pipeline, MatchCountsAndFiles)
{
    Workspace ws;
    const auto s = pipeline::cmd_match(ws.cfg);
    EXPECT_EQ(s.line(), "matched=7 unmatched=3 kept=3");
    EXPECT_EQ(line_count(ws.cfg.out_dir / pipeline::kEvidenceFile), 10u);
    EXPECT_EQ(line_count(ws.cfg.out_dir / pipeline::kRlCandidatesFile), 3u);
    const auto first = tk::read_file(ws.cfg.out_dir / pipeline::kRlCandidatesFile);
    EXPECT_EQ(first.substr(0, first.find('\n')), R"({"id":"q007","difficulty":0.6})");
}

TEST(Pipeline, MatchIsByteIdenticalAcrossRuns)
{
    Workspace ws;
    pipeline::cmd_match(ws.cfg);
    const auto evidence = tk::read_file(ws.cfg.out_dir / pipeline::kEvidenceFile);
    const auto candidates = tk::read_file(ws.cfg.out_dir / pipeline::kRlCandidatesFile);
    auto again = ws.cfg;
    again.out_dir = ws.dir / "again";
    pipeline::cmd_match(again);
    EXPECT_EQ(tk::read_file(again.out_dir / pipeline::kEvidenceFile), evidence);
    EXPECT_EQ(tk::read_file(again.out_dir / pipeline::kRlCandidatesFile), candidates);
}

TEST(Pipeline, MatchInputErrors)
{
    Workspace ws;
    auto cfg = ws.cfg;
    cfg.corpus_root.clear();
    EXPECT_THROW(pipeline::cmd_match(cfg), InputError);
    cfg.corpus_root = ws.dir / "nowhere";
    EXPECT_THROW(pipeline::cmd_match(cfg), InputError);
    save_corpus(tk::fixture_corpus(0, 0), ws.dir / "empty");
    cfg.corpus_root = ws.dir / "empty";
    EXPECT_THROW(pipeline::cmd_match(cfg), InputError);
}

TEST(Pipeline, SynthesizeWithStubIsCleanAndDeterministic)
{
    Workspace ws;
    EXPECT_THROW(pipeline::cmd_synthesize(ws.cfg), InputError);
    pipeline::cmd_match(ws.cfg);
    for (const auto& id : trajectory::template_ids()) {
        ws.cfg.template_id = id;
        const auto s = pipeline::cmd_synthesize(ws.cfg);
        EXPECT_EQ(s.line(), "rendered=7 valid=7 quarantined=0") << id;
    }
    ws.cfg.template_id = "mixed";
    pipeline::cmd_synthesize(ws.cfg);
    const auto first = tk::read_file(ws.cfg.out_dir / pipeline::kTrajectoriesFile);
    pipeline::cmd_synthesize(ws.cfg);
    EXPECT_EQ(tk::read_file(ws.cfg.out_dir / pipeline::kTrajectoriesFile), first);
    EXPECT_EQ(line_count(ws.cfg.out_dir / pipeline::kQuarantineFile), 0u);
}

TEST(Pipeline, FillFailureQuarantinesOnlyThatTrajectory)
{
    Workspace ws;
    pipeline::cmd_match(ws.cfg);
    FlakyClient client(1);
    const auto s = pipeline::cmd_synthesize(ws.cfg, &client);
    EXPECT_EQ(s.valid, 6u);
    EXPECT_EQ(s.quarantined, 1u);
    std::ifstream in(ws.cfg.out_dir / pipeline::kQuarantineFile);
    std::string line;
    ASSERT_TRUE(std::getline(in, line));
    const auto j = json::parse(line);
    EXPECT_EQ(j.at("trajectory").at("instance_id"), "q000");
    ASSERT_EQ(j.at("violations").size(), 1u);
    EXPECT_EQ(j.at("violations")[0].at("kind"), "format");
    EXPECT_NE(j.at("violations")[0].at("message").get<std::string>().find("model refused"), std::string::npos);
}

TEST(Pipeline, CaptionerOutageAbortsTheRun)
{
    Workspace ws;
    pipeline::cmd_match(ws.cfg);
    DownClient client;
    EXPECT_THROW(pipeline::cmd_synthesize(ws.cfg, &client), CaptionerError);
}

TEST(Pipeline, ValidateSplitsGoodFromTampered)
{
    Workspace ws;
    pipeline::cmd_match(ws.cfg);
    pipeline::cmd_synthesize(ws.cfg);
    const auto file = ws.cfg.out_dir / pipeline::kTrajectoriesFile;
    EXPECT_EQ(pipeline::cmd_validate(ws.cfg, file).line(), "rendered=7 valid=7 quarantined=0");

    auto items = trajectory::load_trajectories(file);
    items[2].turns.back().final_answer = "something else";
    std::ofstream out(ws.dir / "tampered.jsonl");
    for (const auto& t : items) out << trajectory::to_json(t).dump() << "\n";
    out.close();
    const auto s = pipeline::cmd_validate(ws.cfg, ws.dir / "tampered.jsonl");
    EXPECT_EQ(s.valid, 6u);
    EXPECT_EQ(s.quarantined, 1u);
    EXPECT_EQ(line_count(ws.cfg.out_dir / pipeline::kValidatedFile), 6u);
    EXPECT_THROW(pipeline::cmd_validate(ws.cfg, ws.dir / "absent.jsonl"), InputError);
}

TEST(Pipeline, TrainWritesReportAndCheckpoints)
{
    Workspace ws;
    const auto cfg = tiny_training(ws.cfg);
    const auto report = pipeline::cmd_train(cfg);
    ASSERT_EQ(report.at("stages").size(), 4u);
    EXPECT_EQ(report.at("config_hash"), config::config_hash(cfg));
    EXPECT_EQ(pipeline::read_json_file(cfg.out_dir / pipeline::kScheduleReportFile), report);
    std::size_t checkpoints = 0;
    for (const auto& e : fs::directory_iterator(cfg.out_dir / "checkpoints")) checkpoints += e.path().extension() == ".ckpt";
    EXPECT_EQ(checkpoints, 4u);

    const auto text = pipeline::format_report(report);
    EXPECT_NE(text.find("plan: DRP-SFT -> RL_d -> CRP-SFT -> RL_c"), std::string::npos);
    EXPECT_NE(text.find("RL_c"), std::string::npos);
}

TEST(Pipeline, TrainAblationRowsPerPlan)
{
    Workspace ws;
    const auto cfg = tiny_training(ws.cfg);
    std::vector<curriculum::StagePlan> plans{cfg.plan, cfg.plan};
    plans[1].stages.resize(1);
    const auto report = pipeline::cmd_train(cfg, plans, 2);
    ASSERT_EQ(report.at("rows").size(), 2u);
    EXPECT_EQ(report.at("rows")[1].at("plan"), "DRP-SFT");
    EXPECT_EQ(report.at("rows")[0].at("rewards").size(), 2u);
    EXPECT_EQ(report.at("seeds"), json::array({0, 1}));
    EXPECT_NE(pipeline::format_report(report).find("mean reward"), std::string::npos);
    EXPECT_THROW(pipeline::cmd_train(cfg, plans, 0), InputError);
}

TEST(Pipeline, EvalScoresPredictions)
{
    Workspace ws(4, 4);
    std::ofstream out(ws.dir / "pred.jsonl");
    out << R"({"id":"q000","prediction":"ANSAA"})" << "\n";
    out << R"({"id":"q001","prediction":" ansab "})" << "\n";
    out << R"({"id":"q002","prediction":"ansac"})" << "\n";
    out << R"({"id":"q003","prediction":"ansad"})" << "\n";
    out.close();
    const auto report = pipeline::cmd_eval(ws.cfg, ws.dir / "pred.jsonl");
    EXPECT_DOUBLE_EQ(report.at("anls").get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(report.at("em").get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(report.at("macro_f1").get<double>(), 1.0);
    EXPECT_NE(pipeline::format_report(report).find("normalization"), std::string::npos);

    std::ofstream bad(ws.dir / "unknown.jsonl");
    bad << R"({"id":"q999","prediction":"x"})" << "\n";
    bad.close();
    EXPECT_THROW(pipeline::cmd_eval(ws.cfg, ws.dir / "unknown.jsonl"), InputError);
}

TEST(Pipeline, FormatReportRejectsUnknownShapes)
{
    EXPECT_THROW(pipeline::format_report(json::array()), InputError);
    EXPECT_THROW(pipeline::format_report(json{{"hello", 1}}), InputError);
    EXPECT_THROW(pipeline::format_report(json{{"stages", 1}, {"final_eval", 2}}), InputError);
}

// ---- command line ----

TEST(Cli, MatchPrintsSummary)
{
    Workspace ws;
    const auto r = run_cli({"match", "--corpus", ws.cfg.corpus_root.string(), "--out", ws.cfg.out_dir.string()});
    EXPECT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_EQ(r.out, "matched=7 unmatched=3 kept=3\n");
}

TEST(Cli, EnvironmentSuppliesPathsAndFlagsWin)
{
    Workspace ws;
    const std::map<std::string, std::string> env{{"VIDEOR4_PATHS__CORPUS", ws.cfg.corpus_root.string()},
                                                 {"VIDEOR4_PATHS__OUT", (ws.dir / "from-env").string()}};
    EXPECT_EQ(run_cli({"match"}, env).code, cli::kExitOk);
    EXPECT_TRUE(fs::exists(ws.dir / "from-env" / pipeline::kEvidenceFile));
    EXPECT_EQ(run_cli({"match", "--out", (ws.dir / "from-flag").string()}, env).code, cli::kExitOk);
    EXPECT_TRUE(fs::exists(ws.dir / "from-flag" / pipeline::kEvidenceFile));
}

TEST(Cli, FullRunThroughSubcommands)
{
    Workspace ws;
    const auto corpus = ws.cfg.corpus_root.string();
    const auto out = ws.cfg.out_dir.string();
    ASSERT_EQ(run_cli({"match", "--corpus", corpus, "--out", out}).code, 0);
    auto r = run_cli({"synthesize", "--corpus", corpus, "--out", out, "--template", "clip_only"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "rendered=7 valid=7 quarantined=0\n");
    r = run_cli({"validate", "--corpus", corpus, "--out", out});
    EXPECT_EQ(r.code, 0) << r.err;

    tk::write_file(ws.dir / "cfg.json", config::to_json(tiny_training(config::PipelineConfig{})).dump());
    r = run_cli({"train", "--config", (ws.dir / "cfg.json").string(), "--out", out, "--plan", "DRP-SFT,RL_d"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("plan: DRP-SFT -> RL_d"), std::string::npos);

    r = run_cli({"report", (ws.cfg.out_dir / pipeline::kScheduleReportFile).string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("final evaluation"), std::string::npos);
}

TEST(Cli, ValidateFailsWhenAnythingIsQuarantined)
{
    Workspace ws;
    pipeline::cmd_match(ws.cfg);
    pipeline::cmd_synthesize(ws.cfg);
    auto items = trajectory::load_trajectories(ws.cfg.out_dir / pipeline::kTrajectoriesFile);
    items[0].turns.back().final_answer = "wrong";
    std::ofstream out(ws.dir / "t.jsonl");
    for (const auto& t : items) out << trajectory::to_json(t).dump() << "\n";
    out.close();
    const auto r = run_cli({"validate", "--corpus", ws.cfg.corpus_root.string(), "--out", ws.cfg.out_dir.string(),
                            "--trajectories", (ws.dir / "t.jsonl").string()});
    EXPECT_EQ(r.code, cli::kExitInput);
    EXPECT_EQ(r.out, "rendered=7 valid=6 quarantined=1\n");
}

TEST(Cli, ExitCodes)
{
    Workspace ws;
    EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
    EXPECT_EQ(run_cli({}).code, cli::kExitInput);
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitInput);
    EXPECT_EQ(run_cli({"match", "--bogus"}).code, cli::kExitInput);
    EXPECT_EQ(run_cli({"eval"}).code, cli::kExitInput);

    auto r = run_cli({"match", "--corpus", (ws.dir / "nowhere").string()});
    EXPECT_EQ(r.code, cli::kExitInput);
    EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
    EXPECT_EQ(run_cli({"report", (ws.dir / "absent.json").string()}).code, cli::kExitInput);
    EXPECT_EQ(run_cli({"train", "--plan", "RL_x"}).code, cli::kExitInput);
    EXPECT_EQ(run_cli({"match", "--corpus", ws.cfg.corpus_root.string()}, {{"VIDEOR4_CAPTIONER__KIND", "gpt"}}).code,
              cli::kExitInput);

    // An output path that is a regular file is an environment fault, not bad input.
    tk::write_file(ws.dir / "plain", "x");
    r = run_cli({"match", "--corpus", ws.cfg.corpus_root.string(), "--out", (ws.dir / "plain").string()});
    EXPECT_EQ(r.code, cli::kExitInternal) << r.err;
    EXPECT_EQ(r.err.rfind("internal error: ", 0), 0u) << r.err;
}
