#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vr4 {

// Integer pixel box, top-left origin, half-open on the max edge:
// covers columns [x1, x2) and rows [y1, y2).
struct BoundingBox {
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;

    int width() const { return x2 - x1; }
    int height() const { return y2 - y1; }
    long long area() const { return static_cast<long long>(width()) * height(); }

    bool valid() const { return x1 >= 0 && y1 >= 0 && x1 < x2 && y1 < y2; }
    bool fits(int frame_width, int frame_height) const
    {
        return valid() && x2 <= frame_width && y2 <= frame_height;
    }
    bool contains(const BoundingBox& other) const
    {
        return x1 <= other.x1 && y1 <= other.y1 && x2 >= other.x2 && y2 >= other.y2;
    }

    auto operator<=>(const BoundingBox&) const = default;
};

nlohmann::json box_to_json(const BoundingBox& box);
// Throws InputError unless the value is a 4-element integer array forming a valid box.
BoundingBox box_from_json(const nlohmann::json& value);

// Grayscale frame; pixels are row-major, width * height bytes.
struct Frame {
    int index = 0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    BoundingBox full_box() const { return {0, 0, width, height}; }

    bool operator==(const Frame&) const = default;
};

enum class OcrLevel { paragraph, token };

struct OcrDetection {
    std::string text;
    BoundingBox box;
    OcrLevel level = OcrLevel::token;

    bool operator==(const OcrDetection&) const = default;
};

struct ObjectDetection {
    std::string label;
    BoundingBox box;

    bool operator==(const ObjectDetection&) const = default;
};

struct AnnotatedFrame {
    Frame frame;
    std::vector<OcrDetection> ocr;
    std::vector<ObjectDetection> objects;

    bool operator==(const AnnotatedFrame&) const = default;
};

struct Video {
    std::string ref;
    std::vector<AnnotatedFrame> frames;

    std::size_t frame_count() const { return frames.size(); }
    const Frame& frame(std::size_t index) const;

    bool operator==(const Video&) const = default;
};

enum class TemporalSource { single_frame, multi_frame };
enum class ModalitySource { text, visual };

struct QAInstance {
    std::string id;
    std::string video_ref;
    std::string question;
    std::vector<std::string> answers;
    TemporalSource src_temporal = TemporalSource::single_frame;
    ModalitySource src_modality = ModalitySource::text;

    bool operator==(const QAInstance&) const = default;
};

nlohmann::json instance_to_json(const QAInstance& q);
// `where` and `line` are used for error locations.
QAInstance instance_from_json(const nlohmann::json& j, const std::string& where, std::size_t line);

// Immutable after load; safe for concurrent readers.
class Corpus {
public:
    Corpus() = default;
    Corpus(std::map<std::string, Video> videos, std::vector<QAInstance> instances);

    const std::map<std::string, Video>& videos() const { return videos_; }
    const std::vector<QAInstance>& instances() const { return instances_; }

    // Throws NotFoundError.
    const Video& video(const std::string& ref) const;
    const QAInstance& instance(const std::string& id) const;
    const QAInstance* find_instance(const std::string& id) const;

    bool operator==(const Corpus& other) const
    {
        return videos_ == other.videos_ && instances_ == other.instances_;
    }

private:
    std::map<std::string, Video> videos_;
    std::vector<QAInstance> instances_;
    std::map<std::string, std::size_t> instance_index_;
};

// Reads `instances.jsonl` plus one directory per video holding
// `annotations.json` and `frame_%06d.png` files. Throws RecordError for
// malformed records and InputError for missing files or dangling references.
Corpus load_corpus(const std::filesystem::path& root);

// Inverse of load_corpus.
void save_corpus(const Corpus& corpus, const std::filesystem::path& root);

// Parses and validates the instances file only (no video resolution).
std::vector<QAInstance> load_instances(const std::filesystem::path& file);

std::string frame_filename(int index);

// Copies the boxed region; throws InputError if the box is degenerate or
// exceeds the frame.
Frame crop_pixels(const Frame& frame, const BoundingBox& box);

// Frames in the requested order; throws InputError on duplicate or
// out-of-range indices.
std::vector<Frame> select_frames(const Video& video, std::span<const int> indices);

std::string to_string(TemporalSource s);
std::string to_string(ModalitySource s);
std::string to_string(OcrLevel l);

} // namespace vr4
