#include "vr4/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "vr4/error.hpp"
#include "vr4/image_io.hpp"
#include "vr4/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vr4 {

json box_to_json(const BoundingBox& box)
{
    return json::array({box.x1, box.y1, box.x2, box.y2});
}

BoundingBox box_from_json(const json& value)
{
    if (!value.is_array() || value.size() != 4) {
        throw InputError("box must be an array [x1,y1,x2,y2]");
    }
    for (const auto& v : value) {
        if (!v.is_number_integer()) throw InputError("box coordinates must be integers");
    }
    BoundingBox box{value[0].get<int>(), value[1].get<int>(), value[2].get<int>(), value[3].get<int>()};
    if (!box.valid()) {
        throw InputError("invalid box [" + std::to_string(box.x1) + "," + std::to_string(box.y1) + "," +
                         std::to_string(box.x2) + "," + std::to_string(box.y2) + "]");
    }
    return box;
}

std::string to_string(TemporalSource s)
{
    return s == TemporalSource::single_frame ? "single" : "multi";
}

std::string to_string(ModalitySource s)
{
    return s == ModalitySource::text ? "text" : "visual";
}

std::string to_string(OcrLevel l)
{
    return l == OcrLevel::paragraph ? "paragraph" : "token";
}

std::string frame_filename(int index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06d.png", index);
    return buf;
}

const Frame& Video::frame(std::size_t index) const
{
    if (index >= frames.size()) {
        throw InputError("frame index " + std::to_string(index) + " out of range for video '" + ref +
                         "' with " + std::to_string(frames.size()) + " frames");
    }
    return frames[index].frame;
}

Corpus::Corpus(std::map<std::string, Video> videos, std::vector<QAInstance> instances)
    : videos_(std::move(videos)), instances_(std::move(instances))
{
    for (std::size_t i = 0; i < instances_.size(); ++i) {
        const auto& q = instances_[i];
        if (!instance_index_.emplace(q.id, i).second) {
            throw InputError("duplicate instance id '" + q.id + "'");
        }
        if (!videos_.contains(q.video_ref)) {
            throw InputError("dangling video reference '" + q.video_ref + "' in instance '" + q.id + "'");
        }
    }
}

const Video& Corpus::video(const std::string& ref) const
{
    auto it = videos_.find(ref);
    if (it == videos_.end()) throw NotFoundError("unknown video '" + ref + "'");
    return it->second;
}

const QAInstance* Corpus::find_instance(const std::string& id) const
{
    auto it = instance_index_.find(id);
    return it == instance_index_.end() ? nullptr : &instances_[it->second];
}

const QAInstance& Corpus::instance(const std::string& id) const
{
    const auto* q = find_instance(id);
    if (q == nullptr) throw NotFoundError("unknown instance '" + id + "'");
    return *q;
}

namespace {

const json& require(const json& obj, const char* key, const std::string& file, std::size_t line,
                    const std::string& path)
{
    if (!obj.is_object() || !obj.contains(key)) {
        throw RecordError(file, line, path + key, "missing");
    }
    return obj.at(key);
}

std::string require_string(const json& obj, const char* key, const std::string& file, std::size_t line,
                           const std::string& path = "")
{
    const auto& v = require(obj, key, file, line, path);
    if (!v.is_string()) throw RecordError(file, line, path + key, "expected string");
    return v.get<std::string>();
}

int require_int(const json& obj, const char* key, const std::string& file, std::size_t line,
                const std::string& path)
{
    const auto& v = require(obj, key, file, line, path);
    if (!v.is_number_integer()) throw RecordError(file, line, path + key, "expected integer");
    return v.get<int>();
}

BoundingBox require_box(const json& obj, const std::string& file, std::size_t line, const std::string& path,
                        int width, int height)
{
    const auto& v = require(obj, "box", file, line, path);
    BoundingBox box;
    try {
        box = box_from_json(v);
    } catch (const InputError& e) {
        throw RecordError(file, line, path + "box", e.what());
    }
    if (!box.fits(width, height)) {
        throw RecordError(file, line, path + "box", "box exceeds frame " + std::to_string(width) + "x" +
                                                         std::to_string(height));
    }
    return box;
}

} // namespace

QAInstance instance_from_json(const json& j, const std::string& where, std::size_t line)
{
    if (!j.is_object()) throw RecordError(where, line, "<record>", "expected object");
    QAInstance q;
    q.id = require_string(j, "id", where, line);
    if (q.id.empty()) throw RecordError(where, line, "id", "empty id");
    q.video_ref = require_string(j, "video", where, line);
    q.question = require_string(j, "question", where, line);
    const auto& answers = require(j, "answers", where, line, "");
    if (!answers.is_array() || answers.empty()) {
        throw RecordError(where, line, "answers", "expected nonempty array of strings");
    }
    for (const auto& a : answers) {
        if (!a.is_string()) throw RecordError(where, line, "answers", "expected nonempty array of strings");
        q.answers.push_back(a.get<std::string>());
    }
    const auto temporal = require_string(j, "src_temporal", where, line);
    if (temporal == "single") {
        q.src_temporal = TemporalSource::single_frame;
    } else if (temporal == "multi") {
        q.src_temporal = TemporalSource::multi_frame;
    } else {
        throw RecordError(where, line, "src_temporal", "expected \"single\" or \"multi\", got \"" + temporal + "\"");
    }
    const auto modality = require_string(j, "src_modality", where, line);
    if (modality == "text") {
        q.src_modality = ModalitySource::text;
    } else if (modality == "visual") {
        q.src_modality = ModalitySource::visual;
    } else {
        throw RecordError(where, line, "src_modality", "expected \"text\" or \"visual\", got \"" + modality + "\"");
    }
    return q;
}

json instance_to_json(const QAInstance& q)
{
    return json{{"id", q.id},
                {"video", q.video_ref},
                {"question", q.question},
                {"answers", q.answers},
                {"src_temporal", to_string(q.src_temporal)},
                {"src_modality", to_string(q.src_modality)}};
}

std::vector<QAInstance> load_instances(const fs::path& file)
{
    std::ifstream in(file);
    if (!in) throw InputError("missing file: " + file.string());
    std::vector<QAInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw RecordError(file.string(), lineno, "<record>", std::string("malformed JSON: ") + e.what());
        }
        out.push_back(instance_from_json(j, file.string(), lineno));
    }
    return out;
}

namespace {

Video load_video(const fs::path& dir)
{
    const auto ann_path = dir / "annotations.json";
    const std::string where = ann_path.string();
    std::ifstream in(ann_path);
    if (!in) throw InputError("missing file: " + where);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw RecordError(where, 0, "<document>", std::string("malformed JSON: ") + e.what());
    }
    const auto& frames = require(doc, "frames", where, 0, "");
    if (!frames.is_array()) throw RecordError(where, 0, "frames", "expected array");

    Video video;
    video.ref = dir.filename().string();
    video.frames.resize(frames.size());
    std::set<int> seen;
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
        const auto& jf = frames[fi];
        const std::string path = "frames[" + std::to_string(fi) + "].";
        const int index = require_int(jf, "index", where, 0, path);
        const int width = require_int(jf, "width", where, 0, path);
        const int height = require_int(jf, "height", where, 0, path);
        if (index < 0 || static_cast<std::size_t>(index) >= frames.size()) {
            throw RecordError(where, 0, path + "index", "frame index " + std::to_string(index) + " out of range");
        }
        if (!seen.insert(index).second) {
            throw RecordError(where, 0, path + "index", "duplicate frame index " + std::to_string(index));
        }
        if (width <= 0 || height <= 0) throw RecordError(where, 0, path + "width", "nonpositive frame size");

        AnnotatedFrame af;
        af.frame = read_png(dir / frame_filename(index));
        af.frame.index = index;
        if (af.frame.width != width || af.frame.height != height) {
            throw RecordError(where, 0, path + "width", "image is " + std::to_string(af.frame.width) + "x" +
                                                            std::to_string(af.frame.height) + ", annotation says " +
                                                            std::to_string(width) + "x" + std::to_string(height));
        }
        if (jf.contains("ocr")) {
            const auto& ocr = jf.at("ocr");
            if (!ocr.is_array()) throw RecordError(where, 0, path + "ocr", "expected array");
            for (std::size_t k = 0; k < ocr.size(); ++k) {
                const std::string dp = path + "ocr[" + std::to_string(k) + "].";
                OcrDetection det;
                det.text = require_string(ocr[k], "text", where, 0, dp);
                if (text::trim(det.text).empty()) throw RecordError(where, 0, dp + "text", "empty text");
                det.box = require_box(ocr[k], where, 0, dp, width, height);
                const auto level = require_string(ocr[k], "level", where, 0, dp);
                if (level == "paragraph") {
                    det.level = OcrLevel::paragraph;
                } else if (level == "token") {
                    det.level = OcrLevel::token;
                } else {
                    throw RecordError(where, 0, dp + "level", "expected \"paragraph\" or \"token\"");
                }
                af.ocr.push_back(std::move(det));
            }
        }
        if (jf.contains("objects")) {
            const auto& objects = jf.at("objects");
            if (!objects.is_array()) throw RecordError(where, 0, path + "objects", "expected array");
            for (std::size_t k = 0; k < objects.size(); ++k) {
                const std::string dp = path + "objects[" + std::to_string(k) + "].";
                ObjectDetection det;
                det.label = require_string(objects[k], "label", where, 0, dp);
                if (text::trim(det.label).empty()) throw RecordError(where, 0, dp + "label", "empty label");
                det.box = require_box(objects[k], where, 0, dp, width, height);
                af.objects.push_back(std::move(det));
            }
        }
        video.frames[static_cast<std::size_t>(index)] = std::move(af);
    }
    return video;
}

json video_to_json(const Video& video)
{
    json frames = json::array();
    for (const auto& af : video.frames) {
        json ocr = json::array();
        for (const auto& d : af.ocr) {
            ocr.push_back({{"text", d.text}, {"box", box_to_json(d.box)}, {"level", to_string(d.level)}});
        }
        json objects = json::array();
        for (const auto& d : af.objects) {
            objects.push_back({{"label", d.label}, {"box", box_to_json(d.box)}});
        }
        frames.push_back({{"index", af.frame.index},
                          {"width", af.frame.width},
                          {"height", af.frame.height},
                          {"ocr", std::move(ocr)},
                          {"objects", std::move(objects)}});
    }
    return json{{"frames", std::move(frames)}};
}

} // namespace

Corpus load_corpus(const fs::path& root)
{
    if (!fs::is_directory(root)) throw InputError("corpus root is not a directory: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "annotations.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::map<std::string, Video> videos;
    for (const auto& dir : dirs) {
        auto v = load_video(dir);
        videos.emplace(v.ref, std::move(v));
    }
    const auto instances_path = root / "instances.jsonl";
    auto instances = load_instances(instances_path);
    std::set<std::string> ids;
    std::size_t lineno = 0;
    for (const auto& q : instances) {
        ++lineno;
        if (!ids.insert(q.id).second) {
            throw RecordError(instances_path.string(), lineno, "id", "duplicate instance id '" + q.id + "'");
        }
        if (!videos.contains(q.video_ref)) {
            throw InputError("dangling video reference '" + q.video_ref + "' in instance '" + q.id + "'");
        }
    }
    return Corpus(std::move(videos), std::move(instances));
}

void save_corpus(const Corpus& corpus, const fs::path& root)
{
    fs::create_directories(root);
    for (const auto& [ref, video] : corpus.videos()) {
        const auto dir = root / ref;
        fs::create_directories(dir);
        for (const auto& af : video.frames) write_png(dir / frame_filename(af.frame.index), af.frame);
        std::ofstream out(dir / "annotations.json");
        if (!out) throw InputError("cannot write " + (dir / "annotations.json").string());
        out << video_to_json(video).dump(1) << '\n';
    }
    std::ofstream out(root / "instances.jsonl");
    if (!out) throw InputError("cannot write " + (root / "instances.jsonl").string());
    for (const auto& q : corpus.instances()) out << instance_to_json(q).dump() << '\n';
}

Frame crop_pixels(const Frame& frame, const BoundingBox& box)
{
    if (!box.valid()) throw InputError("degenerate crop box");
    if (!box.fits(frame.width, frame.height)) throw InputError("crop box exceeds frame bounds");
    Frame out;
    out.index = frame.index;
    out.width = box.width();
    out.height = box.height();
    out.pixels.reserve(static_cast<std::size_t>(out.width) * out.height);
    for (int y = box.y1; y < box.y2; ++y) {
        const auto row = frame.pixels.begin() + static_cast<std::ptrdiff_t>(y) * frame.width;
        out.pixels.insert(out.pixels.end(), row + box.x1, row + box.x2);
    }
    return out;
}

std::vector<Frame> select_frames(const Video& video, std::span<const int> indices)
{
    std::set<int> seen;
    std::vector<Frame> out;
    out.reserve(indices.size());
    for (int i : indices) {
        if (i < 0 || static_cast<std::size_t>(i) >= video.frame_count()) {
            throw InputError("frame index " + std::to_string(i) + " out of range [0," +
                             std::to_string(video.frame_count()) + ")");
        }
        if (!seen.insert(i).second) throw InputError("duplicate frame index " + std::to_string(i));
        out.push_back(video.frames[static_cast<std::size_t>(i)].frame);
    }
    return out;
}

} // namespace vr4
