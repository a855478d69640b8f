#include "vr4/captioner.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "vr4/image_io.hpp"

using nlohmann::json;

namespace vr4 {

namespace {

struct Stats {
    double mean = 0.0;
    double stddev = 0.0;
};

Stats region_stats(const Frame& frame, const BoundingBox& box)
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
    Stats s;
    s.mean = sum / n;
    s.stddev = std::sqrt(std::max(0.0, sq / n - s.mean * s.mean));
    return s;
}

std::string fixed1(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

// FNV-1a; only used to vary stub wording deterministically.
std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string base64(const std::vector<std::uint8_t>& bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

json frame_json(const Frame& f)
{
    return json{{"index", f.index}, {"width", f.width}, {"height", f.height}, {"png_base64", base64(encode_png(f))}};
}

} // namespace

std::string StubCaptioner::caption_video(std::span<const Frame> frames)
{
    if (frames.empty()) return "No frames are visible.";
    std::string out = frames.size() == 1 ? "The frame " : "The frames ";
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(frames[i].index);
    }
    out += frames.size() == 1 ? " has mean intensity " : " have mean intensities ";
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (i > 0) out += ", ";
        out += fixed1(region_stats(frames[i], frames[i].full_box()).mean);
    }
    out += ".";
    return out;
}

std::string StubCaptioner::caption_region(const Frame& frame, const BoundingBox& box, std::string_view)
{
    const auto s = region_stats(frame, box);
    return "The region [" + std::to_string(box.x1) + ", " + std::to_string(box.y1) + ", " + std::to_string(box.x2) +
           ", " + std::to_string(box.y2) + "] of frame " + std::to_string(frame.index) + " has mean intensity " +
           fixed1(s.mean) + " and contrast " + fixed1(s.stddev) + ".";
}

std::string StubCaptioner::think(std::string_view context)
{
    static constexpr std::string_view kPhrases[] = {
        "I check whether these cues are enough to answer.",
        "The visible evidence narrows down the answer.",
        "I compare what I see with the question.",
    };
    return std::string(kPhrases[fnv1a(context) % std::size(kPhrases)]);
}

HttpCaptioner::HttpCaptioner(std::string base_url, int timeout_ms)
    : base_url_(std::move(base_url)), timeout_ms_(timeout_ms)
{
    if (base_url_.empty()) throw InputError("captioner base URL is empty");
}

std::string HttpCaptioner::post(const std::string& path, const std::string& body)
{
    httplib::Client client(base_url_);
    const auto timeout = std::chrono::milliseconds(timeout_ms_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path, body, "application/json");
    if (!res) {
        throw CaptionerError("captioner endpoint " + base_url_ + path + " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw CaptionerError("captioner endpoint " + base_url_ + path + " returned HTTP " + std::to_string(res->status));
    }
    try {
        return json::parse(res->body).at("text").get<std::string>();
    } catch (const json::exception& e) {
        throw CaptionerError("captioner endpoint " + base_url_ + path + " sent a malformed reply: " + e.what());
    }
}

std::string HttpCaptioner::caption_video(std::span<const Frame> frames)
{
    json body{{"frames", json::array()}};
    for (const auto& f : frames) body["frames"].push_back(frame_json(f));
    return post("/caption_video", body.dump());
}

std::string HttpCaptioner::caption_region(const Frame& frame, const BoundingBox& box, std::string_view context)
{
    json body{{"frame", frame_json(frame)}, {"box", box_to_json(box)}, {"context", std::string(context)}};
    return post("/caption_region", body.dump());
}

std::string HttpCaptioner::think(std::string_view context)
{
    return post("/think", json{{"context", std::string(context)}}.dump());
}

std::unique_ptr<CaptionerClient> make_captioner(std::string_view name, const std::string& base_url, int timeout_ms)
{
    if (name == "stub") return std::make_unique<StubCaptioner>();
    if (name == "http") return std::make_unique<HttpCaptioner>(base_url, timeout_ms);
    throw InputError("unknown captioner '" + std::string(name) + "' (expected \"stub\" or \"http\")");
}

} // namespace vr4
