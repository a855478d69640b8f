#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "vr4/corpus.hpp"
#include "vr4/error.hpp"

namespace vr4 {

class CaptionerError : public InputError {
public:
    using InputError::InputError;
};

// Source of captions and reasoning text for trajectory synthesis.
class CaptionerClient {
public:
    virtual ~CaptionerClient() = default;

    virtual std::string caption_video(std::span<const Frame> frames) = 0;
    virtual std::string caption_region(const Frame& frame, const BoundingBox& box, std::string_view context) = 0;
    virtual std::string think(std::string_view context) = 0;
};

// Offline client: text derived from frame statistics and box coordinates.
// Byte-for-byte deterministic.
class StubCaptioner final : public CaptionerClient {
public:
    std::string caption_video(std::span<const Frame> frames) override;
    std::string caption_region(const Frame& frame, const BoundingBox& box, std::string_view context) override;
    std::string think(std::string_view context) override;
};

// Remote client. POSTs JSON to {base_url}/caption_video, /caption_region and
// /think and expects {"text": "..."} back. Frames travel as base64 PNG.
class HttpCaptioner final : public CaptionerClient {
public:
    HttpCaptioner(std::string base_url, int timeout_ms);

    std::string caption_video(std::span<const Frame> frames) override;
    std::string caption_region(const Frame& frame, const BoundingBox& box, std::string_view context) override;
    std::string think(std::string_view context) override;

private:
    std::string post(const std::string& path, const std::string& body);

    std::string base_url_;
    int timeout_ms_;
};

// name is "stub" or "http"; throws InputError otherwise.
std::unique_ptr<CaptionerClient> make_captioner(std::string_view name, const std::string& base_url, int timeout_ms);

} // namespace vr4
