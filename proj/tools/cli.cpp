#include "cli.hpp"

#include <algorithm>
#include <csignal>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "vr4/config.hpp"
#include "vr4/error.hpp"
#include "vr4/pipeline.hpp"
#include "vr4/qc_server.hpp"
#include "vr4/qc_store.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace vr4::cli {

namespace {

struct Common {
    std::string config;
    std::string out;
    std::string corpus;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "Pipeline config file (JSON)");
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--corpus", c.corpus, "Corpus root directory");
    sub->add_option("--seed", c.seed, "Root random seed");
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) {
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

curriculum::StagePlan parse_plan(const std::string& spec)
{
    if (spec == "full") return curriculum::full_plan();
    const auto names = split(spec, ',');
    return curriculum::plan_from_names(names);
}

std::unique_ptr<qc::ReviewStore> open_store(const config::PipelineConfig& cfg, const std::string& trajectories)
{
    const fs::path items = trajectories.empty() ? cfg.out_dir / pipeline::kTrajectoriesFile : fs::path(trajectories);
    if (cfg.corpus_root.empty() || !fs::is_directory(cfg.corpus_root)) {
        throw InputError("corpus root does not exist: " + cfg.corpus_root.string());
    }
    auto corpus = std::make_shared<const Corpus>(load_corpus(cfg.corpus_root));
    auto evidence = evidence::load_evidence(cfg.out_dir / pipeline::kEvidenceFile);
    return std::make_unique<qc::ReviewStore>(trajectory::load_trajectories(items), std::move(corpus),
                                             std::move(evidence), cfg.out_dir / pipeline::kDecisionLogFile);
}

} // namespace

int run(const std::vector<std::string>& args, const std::map<std::string, std::string>& env, std::ostream& out,
        std::ostream& err)
{
    CLI::App app{"video-r4: evidence matching, trajectory synthesis, curriculum training and review"};
    app.name("video-r4");
    app.require_subcommand(1);

    Common common;
    auto* match = app.add_subcommand("match", "Match QA instances to OCR evidence");
    auto* synthesize = app.add_subcommand("synthesize", "Render, fill and validate trajectories");
    auto* validate = app.add_subcommand("validate", "Validate a trajectories file");
    auto* train = app.add_subcommand("train", "Run the training schedule on the synthetic task");
    auto* eval = app.add_subcommand("eval", "Score predictions with ANLS, EM and F1");
    auto* qc_serve = app.add_subcommand("qc-serve", "Serve the review API");
    auto* qc_export = app.add_subcommand("qc-export", "Export reviewed trajectories");
    auto* report = app.add_subcommand("report", "Print a report file");
    for (auto* sub : {match, synthesize, validate, train, eval, qc_serve, qc_export}) add_common(sub, common);

    std::string captioner;
    std::string captioner_url;
    std::string template_id;
    synthesize->add_option("--captioner", captioner, "stub or http");
    synthesize->add_option("--captioner-url", captioner_url, "Base URL of the captioning service");
    synthesize->add_option("--template", template_id, "Trajectory template");

    std::string trajectories;
    validate->add_option("--trajectories", trajectories, "Trajectories file (default: <out>/trajectories.jsonl)");
    qc_serve->add_option("--trajectories", trajectories, "Trajectories file (default: <out>/trajectories.jsonl)");
    qc_export->add_option("--trajectories", trajectories, "Trajectories file (default: <out>/trajectories.jsonl)");

    std::string plan;
    std::vector<std::string> ablation;
    std::size_t seeds = 1;
    train->add_option("--plan", plan, "Comma-separated stage names, or 'full'");
    train->add_option("--ablation", ablation, "Plan to compare (repeatable); 'full' or comma-separated stages");
    train->add_option("--seeds", seeds, "Number of consecutive seeds for ablation runs")->check(CLI::PositiveNumber);

    std::string predictions;
    eval->add_option("--predictions", predictions, "predictions.jsonl with {id, prediction}")->required();

    std::string bind;
    std::optional<int> port;
    qc_serve->add_option("--bind", bind, "Bind address");
    qc_serve->add_option("--port", port, "Port (0 picks a free one)");

    std::string export_path;
    qc_export->add_option("--path", export_path, "Output file for curated trajectories")->required();

    std::string report_file;
    report->add_option("file", report_file, "Report JSON file")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitInput;
    }

    try {
        if (report->parsed()) {
            out << pipeline::format_report(pipeline::read_json_file(report_file));
            return kExitOk;
        }

        json patch = json::object();
        if (!common.out.empty()) patch["paths"]["out"] = common.out;
        if (!common.corpus.empty()) patch["paths"]["corpus"] = common.corpus;
        if (common.seed) patch["seed"] = *common.seed;
        if (!captioner.empty()) patch["captioner"]["kind"] = captioner;
        if (!captioner_url.empty()) patch["captioner"]["url"] = captioner_url;
        if (!template_id.empty()) patch["synthesis"]["template"] = template_id;
        if (!bind.empty()) patch["qc"]["bind"] = bind;
        if (port) patch["qc"]["port"] = *port;
        auto cfg = config::resolve_config(common.config, env, patch);
        if (!plan.empty()) cfg.plan = parse_plan(plan);

        if (match->parsed()) {
            out << pipeline::cmd_match(cfg).line() << "\n";
        } else if (synthesize->parsed()) {
            out << pipeline::cmd_synthesize(cfg).line() << "\n";
        } else if (validate->parsed()) {
            const fs::path file = trajectories.empty() ? cfg.out_dir / pipeline::kTrajectoriesFile : fs::path(trajectories);
            const auto summary = pipeline::cmd_validate(cfg, file);
            out << summary.line() << "\n";
            if (summary.quarantined > 0) return kExitInput;
        } else if (train->parsed()) {
            std::vector<curriculum::StagePlan> plans;
            for (const auto& a : ablation) plans.push_back(parse_plan(a));
            out << pipeline::format_report(pipeline::cmd_train(cfg, plans, seeds));
        } else if (eval->parsed()) {
            out << pipeline::format_report(pipeline::cmd_eval(cfg, predictions));
        } else if (qc_export->parsed()) {
            const auto store = open_store(cfg, trajectories);
            out << qc::to_json(store->export_curated(export_path)).dump(2) << "\n";
        } else if (qc_serve->parsed()) {
            const auto store = open_store(cfg, trajectories);
            sigset_t set;
            sigemptyset(&set);
            sigaddset(&set, SIGINT);
            sigaddset(&set, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &set, nullptr);
            qc::QcServer server(*store, cfg.out_dir);
            const int bound = server.start(cfg.qc.bind, cfg.qc.port);
            out << "listening on " << cfg.qc.bind << ":" << bound << std::endl;
            int sig = 0;
            sigwait(&set, &sig);
            server.stop();
        }
        return kExitOk;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

} // namespace vr4::cli
