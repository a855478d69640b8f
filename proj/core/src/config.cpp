#include "vr4/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "vr4/digest.hpp"
#include "vr4/error.hpp"

extern char** environ;

using nlohmann::json;

namespace vr4::config {

namespace {

const json& section(const json& doc, const char* name)
{
    static const json empty = json::object();
    if (!doc.contains(name)) return empty;
    const auto& s = doc.at(name);
    if (!s.is_object()) throw InputError(std::string("config section '") + name + "' must be an object");
    return s;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

} // namespace

json to_json(const PipelineConfig& cfg)
{
    auto training = curriculum::to_json(cfg.training);
    const auto reward = training.at("reward");
    const auto grpo = training.at("grpo");
    training.erase("reward");
    training.erase("grpo");
    return json{{"paths", {{"corpus", cfg.corpus_root.string()}, {"out", cfg.out_dir.string()}}},
                {"matcher", evidence::to_json(cfg.matcher)},
                {"synthesis", {{"template", cfg.template_id}}},
                {"captioner", {{"kind", cfg.captioner.kind}, {"url", cfg.captioner.url},
                               {"timeout_ms", cfg.captioner.timeout_ms}}},
                {"reward", reward},
                {"grpo", grpo},
                {"training", training},
                {"plan", curriculum::to_json(cfg.plan)},
                {"qc", {{"bind", cfg.qc.bind}, {"port", cfg.qc.port}, {"reviewer", cfg.qc.reviewer}}},
                {"seed", cfg.seed}};
}

PipelineConfig config_from_json(const json& doc)
{
    if (!doc.is_object()) throw InputError("config must be a JSON object");
    PipelineConfig cfg;
    try {
        const auto& paths = section(doc, "paths");
        cfg.corpus_root = paths.value("corpus", std::string());
        cfg.out_dir = paths.value("out", cfg.out_dir.string());
        if (doc.contains("matcher")) cfg.matcher = evidence::matcher_config_from_json(section(doc, "matcher"));
        cfg.template_id = section(doc, "synthesis").value("template", cfg.template_id);
        const auto& cap = section(doc, "captioner");
        cfg.captioner.kind = cap.value("kind", cfg.captioner.kind);
        cfg.captioner.url = cap.value("url", cfg.captioner.url);
        cfg.captioner.timeout_ms = cap.value("timeout_ms", cfg.captioner.timeout_ms);
        cfg.training = curriculum::training_setup_from_json(section(doc, "training"));
        if (doc.contains("reward")) cfg.training.reward = reward::reward_config_from_json(section(doc, "reward"));
        if (doc.contains("grpo")) cfg.training.grpo = grpo::grpo_config_from_json(section(doc, "grpo"));
        if (doc.contains("plan")) cfg.plan = curriculum::plan_from_json(doc.at("plan"));
        const auto& qc = section(doc, "qc");
        cfg.qc.bind = qc.value("bind", cfg.qc.bind);
        cfg.qc.port = qc.value("port", cfg.qc.port);
        cfg.qc.reviewer = qc.value("reviewer", cfg.qc.reviewer);
        if (doc.contains("seed")) {
            const auto& s = doc.at("seed");
            if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<std::int64_t>() < 0)) throw InputError("config seed must be a non-negative integer");
            cfg.seed = s.get<std::uint64_t>();
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    if (cfg.captioner.kind != "stub" && cfg.captioner.kind != "http") {
        throw InputError("config captioner.kind must be 'stub' or 'http'");
    }
    if (cfg.captioner.kind == "http" && cfg.captioner.url.empty()) {
        throw InputError("config captioner.url is required for the http captioner");
    }
    if (cfg.captioner.timeout_ms <= 0) throw InputError("config captioner.timeout_ms must be positive");
    if (cfg.qc.port < 0 || cfg.qc.port > 65535) throw InputError("config qc.port out of range");
    const auto templates = trajectory::template_ids();
    if (std::find(templates.begin(), templates.end(), cfg.template_id) == templates.end()) {
        throw InputError("config synthesis.template '" + cfg.template_id + "' is unknown");
    }
    return cfg;
}

json load_config_document(const std::filesystem::path& file)
{
    if (file.empty()) return json::object();
    std::ifstream in(file);
    if (!in) throw InputError("missing config file: " + file.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("config " + file.string() + ": " + e.what());
    }
}

json apply_env_overrides(json doc, const std::map<std::string, std::string>& env, std::string_view prefix)
{
    if (!doc.is_object()) throw InputError("config must be a JSON object");
    for (const auto& [name, value] : env) {
        if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) continue;
        const auto rest = lower(name.substr(prefix.size()));
        std::string pointer;
        std::size_t pos = 0;
        while (true) {
            const auto next = rest.find("__", pos);
            const auto key = rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            if (key.empty()) throw InputError("malformed environment override " + name);
            pointer += "/" + key;
            if (next == std::string::npos) break;
            pos = next + 2;
        }
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::parse_error&) {
            parsed = value;
        }
        try {
            doc[json::json_pointer(pointer)] = parsed;
        } catch (const json::exception& e) {
            throw InputError("environment override " + name + ": " + e.what());
        }
    }
    return doc;
}

std::map<std::string, std::string> process_environment()
{
    std::map<std::string, std::string> out;
    for (char** e = environ; e && *e; ++e) {
        const std::string entry(*e);
        const auto eq = entry.find('=');
        if (eq != std::string::npos) out.emplace(entry.substr(0, eq), entry.substr(eq + 1));
    }
    return out;
}

PipelineConfig resolve_config(const std::filesystem::path& file, const std::map<std::string, std::string>& env,
                              const json& flag_overrides)
{
    auto doc = apply_env_overrides(load_config_document(file), env);
    if (!flag_overrides.is_null()) doc.merge_patch(flag_overrides);
    return config_from_json(doc);
}

std::string config_hash(const PipelineConfig& cfg)
{
    return json_digest(to_json(cfg));
}

} // namespace vr4::config
