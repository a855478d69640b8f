#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/corpus.hpp"
#include "vr4/error.hpp"
#include "vr4/evidence.hpp"
#include "vr4/trajectory.hpp"

// Human review of synthesized trajectories. State is the initial trajectories
// file folded with an append-only, hash-chained decision log; reopening a
// store over an existing log replays it.
namespace vr4::qc {

enum class ReviewStatus { pending, accepted, dropped, edited };
enum class ReviewAction { accept, drop, edit };

std::string to_string(ReviewStatus s);
std::string to_string(ReviewAction a);
// Throw InputError for unknown names.
ReviewStatus status_from_string(const std::string& s);
ReviewAction action_from_string(const std::string& s);

struct HistoryEntry {
    std::string timestamp;
    std::string reviewer;
    ReviewAction action = ReviewAction::accept;
    std::optional<trajectory::Trajectory> body;
};

struct ReviewItem {
    std::string id;
    ReviewStatus status = ReviewStatus::pending;
    std::uint64_t version = 1;
    trajectory::Trajectory body;
    std::vector<HistoryEntry> history;
};

nlohmann::json to_json(const ReviewItem& item);

struct LogEntry {
    std::uint64_t seq = 0;
    std::string item;
    std::uint64_t version = 0;
    ReviewAction action = ReviewAction::accept;
    std::string reviewer;
    std::string timestamp;
    std::optional<nlohmann::json> body;
    std::string payload_digest;
    std::string prev_digest;
    std::string digest;
};

nlohmann::json to_json(const LogEntry& e);

inline const std::string kGenesisDigest(64, '0');

// Reads and verifies a decision log. Throws InputError when a digest or the
// chain does not verify. A missing file is an empty log.
std::vector<LogEntry> read_log(const std::filesystem::path& file);

class ConflictError : public InputError {
public:
    ConflictError(const std::string& what, std::uint64_t current) : InputError(what), current_(current) {}
    std::uint64_t current_version() const { return current_; }

private:
    std::uint64_t current_;
};

class ValidationFailed : public InputError {
public:
    ValidationFailed(const std::string& what, std::vector<trajectory::Violation> violations)
        : InputError(what), violations_(std::move(violations)) {}
    const std::vector<trajectory::Violation>& violations() const { return violations_; }

private:
    std::vector<trajectory::Violation> violations_;
};

using Clock = std::function<std::string()>;

// ISO-8601 UTC with millisecond precision.
std::string utc_now();

struct ItemSummary {
    std::string id;
    std::string instance_id;
    ReviewStatus status = ReviewStatus::pending;
    std::uint64_t version = 1;
};

struct Page {
    std::vector<ItemSummary> items;
    std::size_t total = 0;
    std::size_t page = 1;
    std::size_t page_size = 20;
    std::size_t pages = 0;
};

nlohmann::json to_json(const Page& p);

struct ExportManifest {
    std::size_t exported = 0;
    std::map<std::string, std::size_t> counts;
    std::string chain_head;
    std::uint64_t log_entries = 0;
};

nlohmann::json to_json(const ExportManifest& m);

class ReviewStore {
public:
    // Throws InputError for duplicate trajectory ids or a log that does not
    // fold onto the initial items.
    ReviewStore(std::vector<trajectory::Trajectory> initial, std::shared_ptr<const Corpus> corpus,
                std::map<std::string, evidence::EvidenceRecord> evidence, std::filesystem::path log_path,
                Clock clock = utc_now);
    ~ReviewStore();

    ReviewStore(const ReviewStore&) = delete;
    ReviewStore& operator=(const ReviewStore&) = delete;

    std::size_t size() const { return order_.size(); }

    // Pages are 1-based and ordered by id. Throws InputError for a zero page
    // or page size.
    Page list_items(std::optional<ReviewStatus> status, std::size_t page, std::size_t page_size) const;

    // Throw NotFoundError for unknown ids.
    ReviewItem get_item(const std::string& id) const;
    // Item plus everything a client needs to draw it: QA pair, clip frame
    // lists, crop overlays and the current validation report.
    nlohmann::json render_bundle(const std::string& id) const;
    Frame frame_image(const std::string& id, int index) const;
    // `call_index` counts tool calls across the body. Throws NotFoundError if
    // it does not name a crop.
    Frame crop_image(const std::string& id, std::size_t call_index) const;

    // Throws ConflictError when expected_version is stale; nothing is written.
    ReviewItem record_decision(const std::string& id, ReviewAction action, const std::string& reviewer,
                               std::uint64_t expected_version);
    // Throws ValidationFailed when the body does not validate against the
    // item's evidence record.
    ReviewItem save_edit(const std::string& id, trajectory::Trajectory body, const std::string& reviewer,
                         std::uint64_t expected_version);

    // Writes accepted and edited bodies (sorted by id) to `path` and the
    // manifest next to it as <path>.manifest.json.
    ExportManifest export_curated(const std::filesystem::path& path) const;

    std::string chain_head() const;
    std::uint64_t log_size() const;

private:
    struct Slot {
        mutable std::shared_mutex mutex;
        ReviewItem item;
    };

    Slot& slot(const std::string& id);
    const Slot& slot(const std::string& id) const;
    trajectory::ValidationReport validate(const trajectory::Trajectory& body) const;
    void apply(ReviewItem& item, const LogEntry& e) const;
    LogEntry append(const std::string& id, std::uint64_t version, ReviewAction action, const std::string& reviewer,
                    std::optional<nlohmann::json> body);

    std::shared_ptr<const Corpus> corpus_;
    std::map<std::string, evidence::EvidenceRecord> evidence_;
    std::filesystem::path log_path_;
    Clock clock_;
    std::vector<std::string> order_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;

    mutable std::mutex log_mutex_;
    std::FILE* log_file_ = nullptr;
    std::uint64_t next_seq_ = 0;
    std::string head_ = kGenesisDigest;
};

} // namespace vr4::qc
