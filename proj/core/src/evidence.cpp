#include "vr4/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include "vr4/error.hpp"

using nlohmann::json;

namespace vr4::evidence {

namespace {

// Scores within this distance of a threshold count as reaching it, so that
// 1 - 1/5 clears a 0.8 threshold regardless of rounding.
constexpr double kThresholdSlack = 1e-12;

std::string normalize_for_score(std::string_view s)
{
    return text::trim(text::to_lower_ascii(s));
}

// Deterministic ordering of equally-scored candidates: smaller area first,
// then text, then coordinates.
bool tie_less(const BoundingBox& a, std::string_view ta, const BoundingBox& b, std::string_view tb)
{
    return std::tuple(a.area(), ta, a) < std::tuple(b.area(), tb, b);
}

} // namespace

void MatcherConfig::validate() const
{
    if (!(text_match_threshold > 0.0 && text_match_threshold <= 1.0)) {
        throw InputError("matcher.text_match_threshold must be in (0,1]");
    }
    if (!(name_match_threshold > 0.0 && name_match_threshold <= 1.0)) {
        throw InputError("matcher.name_match_threshold must be in (0,1]");
    }
    if (!(extend_pad_fraction >= 0.0)) throw InputError("matcher.extend_pad_fraction must be >= 0");
    if (!(difficulty_lo >= 0.0 && difficulty_hi <= 1.0 && difficulty_lo < difficulty_hi)) {
        throw InputError("matcher.difficulty_band must satisfy 0 <= lo < hi <= 1");
    }
}

json to_json(const MatcherConfig& cfg)
{
    return json{{"text_match_threshold", cfg.text_match_threshold},
                {"name_match_threshold", cfg.name_match_threshold},
                {"extend_pad_fraction", cfg.extend_pad_fraction},
                {"difficulty_band", {cfg.difficulty_lo, cfg.difficulty_hi}}};
}

MatcherConfig matcher_config_from_json(const json& j)
{
    MatcherConfig cfg;
    try {
        cfg.text_match_threshold = j.value("text_match_threshold", cfg.text_match_threshold);
        cfg.name_match_threshold = j.value("name_match_threshold", cfg.name_match_threshold);
        cfg.extend_pad_fraction = j.value("extend_pad_fraction", cfg.extend_pad_fraction);
        if (j.contains("difficulty_band")) {
            const auto& band = j.at("difficulty_band");
            if (!band.is_array() || band.size() != 2) throw InputError("matcher.difficulty_band must be [lo, hi]");
            cfg.difficulty_lo = band[0].get<double>();
            cfg.difficulty_hi = band[1].get<double>();
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("matcher config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

json box_map_to_json(const std::map<int, BoundingBox>& boxes)
{
    json out = json::array();
    for (const auto& [f, b] : boxes) out.push_back({{"frame", f}, {"box", box_to_json(b)}});
    return out;
}

std::map<int, BoundingBox> box_map_from_json(const json& j)
{
    std::map<int, BoundingBox> out;
    for (const auto& e : j) out.emplace(e.at("frame").get<int>(), box_from_json(e.at("box")));
    return out;
}

} // namespace

json to_json(const EvidenceRecord& ev)
{
    json j{{"instance_id", ev.instance_id},
           {"matched", ev.matched},
           {"relevant_frames", ev.relevant_frames},
           {"text_boxes", box_map_to_json(ev.text_box_per_frame)},
           {"evidence_boxes", box_map_to_json(ev.evidence_box_per_frame)}};
    j["helpful"] = ev.helpful ? json(*ev.helpful) : json(nullptr);
    return j;
}

EvidenceRecord evidence_from_json(const json& j)
{
    EvidenceRecord ev;
    try {
        ev.instance_id = j.at("instance_id").get<std::string>();
        ev.matched = j.at("matched").get<bool>();
        for (const auto& f : j.at("relevant_frames")) ev.relevant_frames.insert(f.get<int>());
        ev.text_box_per_frame = box_map_from_json(j.at("text_boxes"));
        ev.evidence_box_per_frame = box_map_from_json(j.at("evidence_boxes"));
        if (j.contains("helpful") && !j.at("helpful").is_null()) ev.helpful = j.at("helpful").get<bool>();
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed evidence record: ") + e.what());
    }
    return ev;
}

std::map<std::string, EvidenceRecord> load_evidence(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw InputError("missing file: " + file.string());
    std::map<std::string, EvidenceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            auto ev = evidence_from_json(json::parse(line));
            out.emplace(ev.instance_id, std::move(ev));
        } catch (const json::parse_error& e) {
            throw RecordError(file.string(), lineno, "<record>", e.what());
        } catch (const InputError& e) {
            throw RecordError(file.string(), lineno, "<record>", e.what());
        }
    }
    return out;
}

void write_evidence(const std::filesystem::path& file, std::span<const EvidenceRecord> records)
{
    std::ofstream out(file);
    if (!out) throw InputError("cannot write " + file.string());
    for (const auto& ev : records) out << to_json(ev).dump() << '\n';
}

TokenSet normalize_tokens(std::string_view s)
{
    return text::normalize_tokens(s);
}

double normalized_levenshtein(std::string_view a, std::string_view b)
{
    return text::normalized_levenshtein(a, b);
}

double score_text(std::string_view s, std::span<const std::string> answers)
{
    if (answers.empty()) throw InputError("score_text: empty answer list");
    const auto ns = normalize_for_score(s);
    double best = 0.0;
    for (const auto& a : answers) {
        best = std::max(best, 1.0 - text::normalized_levenshtein(ns, normalize_for_score(a)));
    }
    return best;
}

double score_name(std::string_view name, const TokenSet& tokens)
{
    const auto nn = normalize_for_score(name);
    double best = 0.0;
    for (const auto& u : tokens) best = std::max(best, 1.0 - text::normalized_levenshtein(nn, u));
    return best;
}

double iou(const BoundingBox& a, const BoundingBox& b)
{
    const long long iw = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const long long ih = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const long long inter = iw * ih;
    if (inter == 0) return 0.0;
    const long long uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

BoundingBox extend_box(const BoundingBox& box, int frame_width, int frame_height, double pad_fraction)
{
    const int pad_x = static_cast<int>(std::lround(pad_fraction * box.width()));
    const int pad_y = static_cast<int>(std::lround(pad_fraction * box.height()));
    return BoundingBox{std::max(0, box.x1 - pad_x), std::max(0, box.y1 - pad_y),
                       std::min(frame_width, box.x2 + pad_x), std::min(frame_height, box.y2 + pad_y)};
}

BoundingBox merge_boxes(std::span<const BoundingBox> boxes)
{
    if (boxes.empty()) throw InputError("merge_boxes: empty box set");
    BoundingBox out = boxes.front();
    for (const auto& b : boxes.subspan(1)) {
        out.x1 = std::min(out.x1, b.x1);
        out.y1 = std::min(out.y1, b.y1);
        out.x2 = std::max(out.x2, b.x2);
        out.y2 = std::max(out.y2, b.y2);
    }
    return out;
}

EvidenceRecord match_question(const QAInstance& q, const Corpus& corpus, const MatcherConfig& cfg)
{
    cfg.validate();
    const Video& video = corpus.video(q.video_ref);

    EvidenceRecord ev;
    ev.instance_id = q.id;

    // Best token-level OCR match per frame.
    std::map<int, double> frame_score;
    std::map<int, BoundingBox> text_box;
    for (const auto& af : video.frames) {
        const OcrDetection* best = nullptr;
        double best_score = -1.0;
        for (const auto& det : af.ocr) {
            if (det.level != OcrLevel::token) continue;
            const double s = score_text(det.text, q.answers);
            if (best == nullptr || s > best_score ||
                (s == best_score && tie_less(det.box, det.text, best->box, best->text))) {
                best = &det;
                best_score = s;
            }
        }
        if (best != nullptr && best_score >= cfg.text_match_threshold - kThresholdSlack) {
            frame_score[af.frame.index] = best_score;
            text_box[af.frame.index] = best->box;
        }
    }
    if (text_box.empty()) return ev;

    // Refine each text box to the paragraph with maximal IoU, then enlarge it.
    for (auto& [f, box] : text_box) {
        const auto& af = video.frames[static_cast<std::size_t>(f)];
        const OcrDetection* best = nullptr;
        double best_iou = 0.0;
        for (const auto& det : af.ocr) {
            if (det.level != OcrLevel::paragraph) continue;
            const double o = iou(det.box, box);
            if (o <= 0.0) continue;
            if (best == nullptr || o > best_iou ||
                (o == best_iou && tie_less(det.box, det.text, best->box, best->text))) {
                best = &det;
                best_iou = o;
            }
        }
        if (best != nullptr) {
            box = extend_box(best->box, af.frame.width, af.frame.height, cfg.extend_pad_fraction);
        }
    }

    // Frame selection by temporal source.
    std::set<int> selected;
    if (q.src_temporal == TemporalSource::single_frame) {
        int best_frame = frame_score.begin()->first;
        double best = frame_score.begin()->second;
        for (const auto& [f, s] : frame_score) {
            if (s > best) {
                best = s;
                best_frame = f;
            }
        }
        selected.insert(best_frame);
    } else {
        for (const auto& [f, s] : frame_score) selected.insert(f);
    }

    TokenSet name_tokens;
    if (q.src_modality == ModalitySource::visual) {
        for (const auto& a : q.answers) name_tokens.merge(text::normalize_tokens(a));
        name_tokens.merge(text::normalize_tokens(q.question));
    }

    for (int f : selected) {
        const BoundingBox tb = text_box.at(f);
        ev.relevant_frames.insert(f);
        ev.text_box_per_frame.emplace(f, tb);
        if (q.src_modality == ModalitySource::text) {
            ev.evidence_box_per_frame.emplace(f, tb);
            continue;
        }
        std::vector<BoundingBox> boxes{tb};
        for (const auto& obj : video.frames[static_cast<std::size_t>(f)].objects) {
            if (score_name(obj.label, name_tokens) >= cfg.name_match_threshold - kThresholdSlack) {
                boxes.push_back(obj.box);
            }
        }
        ev.evidence_box_per_frame.emplace(f, merge_boxes(boxes));
    }
    ev.matched = true;
    return ev;
}

double estimate_difficulty(const QAInstance& q, const Corpus& corpus)
{
    const Video& video = corpus.video(q.video_ref);
    double best = 0.0;
    for (const auto& af : video.frames) {
        for (const auto& det : af.ocr) best = std::max(best, score_text(det.text, q.answers));
    }
    return 1.0 - best;
}

RlPartition partition_rl_candidates(std::span<const QAInstance> instances, const Corpus& corpus,
                                    const MatcherConfig& cfg)
{
    cfg.validate();
    RlPartition out;
    for (const auto& q : instances) {
        if (match_question(q, corpus, cfg).matched) continue;
        const double d = estimate_difficulty(q, corpus);
        if (d >= cfg.difficulty_lo && d <= cfg.difficulty_hi) {
            out.kept.push_back(q.id);
        } else {
            out.dropped.push_back(q.id);
        }
    }
    return out;
}

} // namespace vr4::evidence
