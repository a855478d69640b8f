#include "vr4/toy_task.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <random>

#include "vr4/error.hpp"
#include "vr4/reward.hpp"
#include "vr4/seeding.hpp"
#include "vr4/text.hpp"

using nlohmann::json;

namespace vr4::toy {

namespace {

constexpr std::string_view kVocabulary[] = {
    "exit",   "gate",  "north", "south", "platform", "ticket", "coffee", "market", "harbor", "museum",
    "bridge", "tower", "lobby", "stairs", "garden",  "office", "bakery", "clinic", "school", "depot",
    "arena",  "plaza", "hotel", "subway",
};

constexpr std::uint8_t kBackground = 128;
constexpr int kNoiseAmplitude = 8;
constexpr std::uint8_t kGlyphOn = 220;
constexpr std::uint8_t kGlyphOff = 40;
constexpr std::uint8_t kDecoyOn = 158;
constexpr std::uint8_t kDecoyOff = 98;
// Cosine distance below which a crop counts as showing a candidate's glyph.
constexpr double kReadDistance = 0.1;

void paint_glyph(Frame& frame, const BoundingBox& cell, std::string_view word, std::uint8_t on, std::uint8_t off)
{
    const auto bits = glyph_bits(word);
    for (int y = cell.y1; y < cell.y2; ++y) {
        for (int x = cell.x1; x < cell.x2; ++x) {
            const int gx = (x - cell.x1) * 8 / cell.width();
            const int gy = (y - cell.y1) * 8 / cell.height();
            frame.pixels[static_cast<std::size_t>(y) * frame.width + x] = bits[gy * 8 + gx] ? on : off;
        }
    }
}

double region_stddev(const Frame& frame, const BoundingBox& box)
{
    double sum = 0.0;
    double sq = 0.0;
    for (int y = box.y1; y < box.y2; ++y) {
        for (int x = box.x1; x < box.x2; ++x) {
            const double v = frame.at(x, y);
            sum += v;
            sq += v * v;
        }
    }
    const double n = static_cast<double>(box.area());
    const double mean = sum / n;
    return std::sqrt(std::max(0.0, sq / n - mean * mean));
}

BoundingBox cell_box(const TaskConfig& cfg, int cell)
{
    const int gx = cell % cfg.grid;
    const int gy = cell / cfg.grid;
    return {gx * cfg.cell_size, gy * cfg.cell_size, (gx + 1) * cfg.cell_size, (gy + 1) * cfg.cell_size};
}

} // namespace

void TaskConfig::validate() const
{
    if (frames < 1) throw InputError("task frames must be >= 1");
    if (grid < 1) throw InputError("task grid must be >= 1");
    if (cell_size < 8) throw InputError("task cell_size must be >= 8");
    if (candidates < 2 || candidates > static_cast<int>(std::size(kVocabulary))) {
        throw InputError("task candidates out of range");
    }
    if (max_window < 1) throw InputError("task max_window must be >= 1");
    if (prior_accuracy < 0 || prior_accuracy > 1) throw InputError("task prior_accuracy must be in [0,1]");
    if (decoy_rate < 0 || decoy_rate > 1) throw InputError("task decoy_rate must be in [0,1]");
}

json to_json(const TaskConfig& cfg)
{
    return json{{"frames", cfg.frames},         {"grid", cfg.grid},
                {"cell_size", cfg.cell_size},   {"candidates", cfg.candidates},
                {"max_window", cfg.max_window}, {"prior_accuracy", cfg.prior_accuracy},
                {"decoy_rate", cfg.decoy_rate}};
}

TaskConfig task_config_from_json(const json& j, TaskConfig cfg)
{
    try {
        cfg.frames = j.value("frames", cfg.frames);
        cfg.grid = j.value("grid", cfg.grid);
        cfg.cell_size = j.value("cell_size", cfg.cell_size);
        cfg.candidates = j.value("candidates", cfg.candidates);
        cfg.max_window = j.value("max_window", cfg.max_window);
        cfg.prior_accuracy = j.value("prior_accuracy", cfg.prior_accuracy);
        cfg.decoy_rate = j.value("decoy_rate", cfg.decoy_rate);
    } catch (const json::exception& e) {
        throw InputError(std::string("task config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<bool> glyph_bits(std::string_view word)
{
    std::uint64_t h = fnv1a64(word);
    std::uint64_t bits = splitmix64(h);
    // Avoid near-blank glyphs; they would not read reliably after pooling.
    while (std::popcount(bits) < 20 || std::popcount(bits) > 44) bits = splitmix64(bits);
    std::vector<bool> out(64);
    for (int i = 0; i < 64; ++i) out[static_cast<std::size_t>(i)] = (bits >> i) & 1U;
    return out;
}

ToyInstance make_instance(const TaskConfig& cfg, const std::string& id, int frames, std::uint64_t seed)
{
    cfg.validate();
    if (frames < 1) throw InputError("instance needs at least one frame");
    std::mt19937_64 rng(seed);

    ToyInstance inst;
    std::vector<std::string> pool(std::begin(kVocabulary), std::end(kVocabulary));
    for (int i = 0; i < cfg.candidates; ++i) {
        const int pick = i + uniform_int(rng, static_cast<int>(pool.size()) - i);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick)]);
        inst.candidates.push_back(pool[static_cast<std::size_t>(i)]);
    }
    inst.answer = uniform_int(rng, cfg.candidates);
    inst.planted_frame = uniform_int(rng, frames);
    inst.planted_cell = uniform_int(rng, cfg.grid * cfg.grid);
    if (uniform01(rng) < cfg.prior_accuracy) {
        inst.prior_guess = inst.answer;
    } else {
        inst.prior_guess = (inst.answer + 1 + uniform_int(rng, cfg.candidates - 1)) % cfg.candidates;
    }

    const int side = cfg.grid * cfg.cell_size;
    inst.video.ref = id + "_video";
    for (int f = 0; f < frames; ++f) {
        AnnotatedFrame af;
        af.frame.index = f;
        af.frame.width = side;
        af.frame.height = side;
        af.frame.pixels.resize(static_cast<std::size_t>(side) * side);
        for (auto& p : af.frame.pixels) {
            p = static_cast<std::uint8_t>(kBackground - kNoiseAmplitude + uniform_int(rng, 2 * kNoiseAmplitude + 1));
        }
        if (f == inst.planted_frame) {
            const auto box = cell_box(cfg, inst.planted_cell);
            const auto& word = inst.candidates[static_cast<std::size_t>(inst.answer)];
            paint_glyph(af.frame, box, word, kGlyphOn, kGlyphOff);
            af.ocr.push_back(OcrDetection{word, box, OcrLevel::token});
            af.ocr.push_back(OcrDetection{word, box, OcrLevel::paragraph});
        } else if (uniform01(rng) < cfg.decoy_rate) {
            const int wrong = (inst.answer + 1 + uniform_int(rng, cfg.candidates - 1)) % cfg.candidates;
            const auto box = cell_box(cfg, uniform_int(rng, cfg.grid * cfg.grid));
            const auto& word = inst.candidates[static_cast<std::size_t>(wrong)];
            paint_glyph(af.frame, box, word, kDecoyOn, kDecoyOff);
            af.ocr.push_back(OcrDetection{word, box, OcrLevel::token});
        }
        inst.video.frames.push_back(std::move(af));
    }

    std::string options;
    for (const auto& c : inst.candidates) options += (options.empty() ? "" : ", ") + c;
    inst.qa.id = id;
    inst.qa.video_ref = inst.video.ref;
    inst.qa.question = "Which word is written on the sign? Options: " + options + ".";
    inst.qa.answers = {inst.candidates[static_cast<std::size_t>(inst.answer)]};
    inst.qa.src_temporal = frames > 1 ? TemporalSource::multi_frame : TemporalSource::single_frame;
    inst.qa.src_modality = ModalitySource::text;
    return inst;
}

std::vector<ToyInstance> make_instances(const TaskConfig& cfg, const std::string& prefix, std::size_t count,
                                        int frames, std::uint64_t seed)
{
    std::vector<ToyInstance> out;
    out.reserve(count);
    char buf[32];
    for (std::size_t i = 0; i < count; ++i) {
        std::snprintf(buf, sizeof buf, "%05zu", i);
        out.push_back(make_instance(cfg, prefix + buf, frames, derive_seed(seed, {i})));
    }
    return out;
}

Corpus to_corpus(std::span<const ToyInstance> instances)
{
    std::map<std::string, Video> videos;
    std::vector<QAInstance> qas;
    for (const auto& inst : instances) {
        videos.emplace(inst.video.ref, inst.video);
        qas.push_back(inst.qa);
    }
    return Corpus(std::move(videos), std::move(qas));
}

policy::EpisodeContext build_context(const ToyInstance& inst, const TaskConfig& cfg, const Encoder& encoder)
{
    policy::EpisodeContext ctx;
    ctx.instance_id = inst.qa.id;
    ctx.frame_count = static_cast<int>(inst.video.frame_count());
    ctx.grid = cfg.grid;
    ctx.cell_size = cfg.cell_size;
    ctx.candidates = inst.candidates;
    ctx.prior_guess = inst.prior_guess;
    for (int len = 1; len <= std::min(cfg.max_window, ctx.frame_count); ++len) {
        for (int s = 0; s + len <= ctx.frame_count; ++s) ctx.windows.push_back({s, len});
    }

    std::vector<FeatureVector> glyphs;
    for (const auto& word : inst.candidates) {
        Frame g{0, cfg.cell_size, cfg.cell_size, std::vector<std::uint8_t>(static_cast<std::size_t>(cfg.cell_size) * cfg.cell_size)};
        paint_glyph(g, g.full_box(), word, kGlyphOn, kGlyphOff);
        glyphs.push_back(encoder.encode(g));
    }

    double top = 0.0;
    for (const auto& af : inst.video.frames) {
        std::vector<double> sal;
        std::vector<int> reading;
        for (int c = 0; c < cfg.grid * cfg.grid; ++c) {
            const auto box = cell_box(cfg, c);
            sal.push_back(region_stddev(af.frame, box));
            top = std::max(top, sal.back());
            const auto feature = encoder.encode(crop_pixels(af.frame, box));
            int read = -1;
            for (std::size_t k = 0; k < glyphs.size(); ++k) {
                if (reward::cosine_distance(feature, glyphs[k]) < kReadDistance) read = static_cast<int>(k);
            }
            reading.push_back(read);
        }
        ctx.cell_saliency.push_back(std::move(sal));
        ctx.cell_reading.push_back(std::move(reading));
    }
    for (auto& row : ctx.cell_saliency) {
        for (double& v : row) v = top > 0 ? v / top : 0.0;
        ctx.frame_saliency.push_back(*std::max_element(row.begin(), row.end()));
    }
    return ctx;
}

trajectory::Trajectory to_trajectory(const policy::EpisodeContext& ctx, const policy::ActionSeq& seq,
                                     const std::string& id, trajectory::Provenance provenance)
{
    policy::check_actions(ctx, seq);
    trajectory::Trajectory t;
    t.id = id;
    t.instance_id = ctx.instance_id;
    t.provenance = provenance;
    if (seq.clip != policy::kNone) {
        const auto& w = ctx.windows[static_cast<std::size_t>(seq.clip)];
        t.turns.push_back({"Scan frames " + std::to_string(w.start) + " to " + std::to_string(w.start + w.length - 1) +
                               " for the sign.",
                           trajectory::ToolCall::clip(w.frames()), std::nullopt});
    }
    if (seq.crop != policy::kNone) {
        const int focus = ctx.focus_frame(seq.clip);
        t.turns.push_back({"Zoom into the brightest region of frame " + std::to_string(focus) + ".",
                           trajectory::ToolCall::crop(focus, ctx.cell_box(seq.crop)), std::nullopt});
    }
    t.turns.push_back({"Answer from what was read.", std::nullopt, ctx.candidates[static_cast<std::size_t>(seq.answer)]});
    return t;
}

policy::ActionSeq from_trajectory(const policy::EpisodeContext& ctx, const trajectory::Trajectory& t)
{
    using trajectory::ToolName;
    policy::ActionSeq seq{policy::kNone, policy::kNone, -1};
    std::size_t i = 0;
    const auto& turns = t.turns;
    if (i < turns.size() && turns[i].tool_call && turns[i].tool_call->name == ToolName::clip) {
        const auto& frames = turns[i].tool_call->frames;
        for (std::size_t w = 0; w < ctx.windows.size(); ++w) {
            if (ctx.windows[w].frames() == frames) seq.clip = static_cast<int>(w);
        }
        if (seq.clip == policy::kNone) throw InputError("clip frames are not a contiguous window of the task");
        ++i;
    }
    if (i < turns.size() && turns[i].tool_call && turns[i].tool_call->name == ToolName::crop) {
        const auto& call = *turns[i].tool_call;
        if (call.frame != ctx.focus_frame(seq.clip)) throw InputError("crop frame is not the focus frame");
        for (int c = 0; c < ctx.cell_count(); ++c) {
            if (ctx.cell_box(c) == call.box) seq.crop = c;
        }
        if (seq.crop == policy::kNone) throw InputError("crop box is not a grid cell");
        ++i;
    }
    if (i + 1 != turns.size() || !turns[i].final_answer) {
        throw InputError("trajectory does not follow the clip, crop, answer order");
    }
    const auto answer = text::normalize_answer(*turns[i].final_answer);
    for (std::size_t k = 0; k < ctx.candidates.size(); ++k) {
        if (text::normalize_answer(ctx.candidates[k]) == answer) seq.answer = static_cast<int>(k);
    }
    if (seq.answer < 0) throw InputError("answer is not one of the candidates");
    return seq;
}

policy::ActionSeq demonstration(const policy::EpisodeContext& ctx, const ToyInstance& inst,
                                std::string_view template_id, std::uint64_t seed)
{
    policy::ActionSeq seq{policy::kNone, policy::kNone, inst.answer};
    const bool want_clip = template_id == "clip_only" || template_id == "mixed";
    const bool want_crop = template_id == "crop_only" || template_id == "mixed";
    if (!want_clip && !want_crop) throw InputError("unknown template '" + std::string(template_id) + "'");
    if (want_clip) {
        std::vector<int> options;
        for (std::size_t w = 0; w < ctx.windows.size(); ++w) {
            if (ctx.focus_frame(static_cast<int>(w)) == inst.planted_frame) options.push_back(static_cast<int>(w));
        }
        if (options.empty()) throw InputError("no window brings the answer frame into focus");
        std::mt19937_64 rng(seed);
        seq.clip = options[static_cast<std::size_t>(uniform_int(rng, static_cast<int>(options.size())))];
    }
    if (want_crop) {
        if (ctx.focus_frame(seq.clip) != inst.planted_frame) {
            throw InputError("crop_only demonstration needs the answer on frame 0");
        }
        seq.crop = inst.planted_cell;
    }
    return seq;
}

ToyEnvironment::ToyEnvironment(std::vector<ToyInstance> instances, TaskConfig cfg,
                               std::shared_ptr<const Encoder> encoder)
    : instances_(std::move(instances)), cfg_(cfg), encoder_(std::move(encoder))
{
    cfg_.validate();
    if (!encoder_) throw InputError("environment needs an encoder");
    contexts_.reserve(instances_.size());
    for (const auto& inst : instances_) {
        if (!index_.emplace(inst.qa.id, contexts_.size()).second) {
            throw InputError("duplicate instance id '" + inst.qa.id + "'");
        }
        contexts_.push_back(build_context(inst, cfg_, *encoder_));
    }
}

std::size_t ToyEnvironment::index_of(const std::string& instance_id) const
{
    auto it = index_.find(instance_id);
    if (it == index_.end()) throw NotFoundError("unknown instance '" + instance_id + "'");
    return it->second;
}

env::EpisodeRecord ToyEnvironment::rollout(std::size_t i, const policy::ActionSeq& seq) const
{
    const auto& ctx = context(i);
    const auto t = to_trajectory(ctx, seq, ctx.instance_id + "#rollout");
    return env::run_trajectory(t, instances_[i].video, *encoder_);
}

} // namespace vr4::toy
