#include "vr4/qc_store.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include <unistd.h>

#include "vr4/digest.hpp"

using nlohmann::json;

namespace vr4::qc {

std::string to_string(ReviewStatus s)
{
    switch (s) {
    case ReviewStatus::pending: return "pending";
    case ReviewStatus::accepted: return "accepted";
    case ReviewStatus::dropped: return "dropped";
    case ReviewStatus::edited: return "edited";
    }
    return "?";
}

std::string to_string(ReviewAction a)
{
    switch (a) {
    case ReviewAction::accept: return "accept";
    case ReviewAction::drop: return "drop";
    case ReviewAction::edit: return "edit";
    }
    return "?";
}

ReviewStatus status_from_string(const std::string& s)
{
    for (auto v : {ReviewStatus::pending, ReviewStatus::accepted, ReviewStatus::dropped, ReviewStatus::edited}) {
        if (to_string(v) == s) return v;
    }
    throw InputError("unknown review status '" + s + "'");
}

ReviewAction action_from_string(const std::string& s)
{
    for (auto v : {ReviewAction::accept, ReviewAction::drop, ReviewAction::edit}) {
        if (to_string(v) == s) return v;
    }
    throw InputError("unknown review action '" + s + "'");
}

namespace {

json trajectory_json(const trajectory::Trajectory& t)
{
    return json::parse(trajectory::to_json(t).dump());
}

json payload_of(ReviewAction action, const std::string& reviewer, const std::optional<json>& body)
{
    return json{{"action", to_string(action)}, {"reviewer", reviewer}, {"body", body ? *body : json(nullptr)}};
}

std::string entry_digest(const LogEntry& e)
{
    const json core{{"seq", e.seq},
                    {"item", e.item},
                    {"version", e.version},
                    {"action", to_string(e.action)},
                    {"reviewer", e.reviewer},
                    {"timestamp", e.timestamp},
                    {"payload_digest", e.payload_digest},
                    {"prev_digest", e.prev_digest}};
    return sha256_hex(e.prev_digest + core.dump());
}

LogEntry entry_from_json(const json& j)
{
    LogEntry e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.item = j.at("item").get<std::string>();
    e.version = j.at("version").get<std::uint64_t>();
    e.action = action_from_string(j.at("action").get<std::string>());
    e.reviewer = j.at("reviewer").get<std::string>();
    e.timestamp = j.at("timestamp").get<std::string>();
    if (!j.at("body").is_null()) e.body = j.at("body");
    e.payload_digest = j.at("payload_digest").get<std::string>();
    e.prev_digest = j.at("prev_digest").get<std::string>();
    e.digest = j.at("digest").get<std::string>();
    return e;
}

} // namespace

json to_json(const LogEntry& e)
{
    return json{{"seq", e.seq},
                {"item", e.item},
                {"version", e.version},
                {"action", to_string(e.action)},
                {"reviewer", e.reviewer},
                {"timestamp", e.timestamp},
                {"body", e.body ? *e.body : json(nullptr)},
                {"payload_digest", e.payload_digest},
                {"prev_digest", e.prev_digest},
                {"digest", e.digest}};
}

json to_json(const ReviewItem& item)
{
    json history = json::array();
    for (const auto& h : item.history) {
        history.push_back({{"timestamp", h.timestamp},
                           {"reviewer", h.reviewer},
                           {"action", to_string(h.action)},
                           {"body", h.body ? trajectory_json(*h.body) : json(nullptr)}});
    }
    return json{{"id", item.id},
                {"status", to_string(item.status)},
                {"version", item.version},
                {"body", trajectory_json(item.body)},
                {"history", std::move(history)}};
}

json to_json(const Page& p)
{
    json items = json::array();
    for (const auto& s : p.items) {
        items.push_back(
            {{"id", s.id}, {"instance_id", s.instance_id}, {"status", to_string(s.status)}, {"version", s.version}});
    }
    return json{{"items", std::move(items)},
                {"total", p.total},
                {"page", p.page},
                {"page_size", p.page_size},
                {"pages", p.pages}};
}

json to_json(const ExportManifest& m)
{
    return json{{"exported", m.exported},
                {"counts", m.counts},
                {"chain_head", m.chain_head},
                {"log_entries", m.log_entries}};
}

std::vector<LogEntry> read_log(const std::filesystem::path& file)
{
    std::vector<LogEntry> out;
    std::ifstream in(file);
    if (!in) return out;
    std::string line;
    std::size_t lineno = 0;
    std::string prev = kGenesisDigest;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        LogEntry e;
        try {
            e = entry_from_json(json::parse(line));
        } catch (const json::exception& ex) {
            throw RecordError(file.string(), lineno, "<entry>", ex.what());
        }
        if (e.seq != out.size()) throw RecordError(file.string(), lineno, "seq", "out of sequence");
        if (e.prev_digest != prev) throw RecordError(file.string(), lineno, "prev_digest", "chain broken");
        if (sha256_hex(payload_of(e.action, e.reviewer, e.body).dump()) != e.payload_digest) {
            throw RecordError(file.string(), lineno, "payload_digest", "payload does not match its digest");
        }
        if (entry_digest(e) != e.digest) throw RecordError(file.string(), lineno, "digest", "entry does not verify");
        prev = e.digest;
        out.push_back(std::move(e));
    }
    return out;
}

std::string utc_now()
{
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
    return buf;
}

ReviewStore::ReviewStore(std::vector<trajectory::Trajectory> initial, std::shared_ptr<const Corpus> corpus,
                         std::map<std::string, evidence::EvidenceRecord> evidence, std::filesystem::path log_path,
                         Clock clock)
    : corpus_(std::move(corpus)), evidence_(std::move(evidence)), log_path_(std::move(log_path)),
      clock_(std::move(clock))
{
    if (!corpus_) throw InputError("review store needs a corpus");
    if (log_path_.empty()) throw InputError("review store needs a decision log path");
    for (auto& t : initial) {
        auto s = std::make_unique<Slot>();
        s->item.id = t.id;
        s->item.body = std::move(t);
        const auto id = s->item.id;
        if (!slots_.emplace(id, std::move(s)).second) throw InputError("duplicate trajectory id '" + id + "'");
        order_.push_back(id);
    }
    std::sort(order_.begin(), order_.end());

    for (const auto& e : read_log(log_path_)) {
        auto it = slots_.find(e.item);
        if (it == slots_.end()) throw InputError("decision log names unknown item '" + e.item + "'");
        apply(it->second->item, e);
        head_ = e.digest;
        next_seq_ = e.seq + 1;
    }
    if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
    log_file_ = std::fopen(log_path_.c_str(), "a");
    if (!log_file_) throw InputError("cannot open decision log " + log_path_.string());
}

ReviewStore::~ReviewStore()
{
    if (log_file_) std::fclose(log_file_);
}

ReviewStore::Slot& ReviewStore::slot(const std::string& id)
{
    auto it = slots_.find(id);
    if (it == slots_.end()) throw NotFoundError("unknown item '" + id + "'");
    return *it->second;
}

const ReviewStore::Slot& ReviewStore::slot(const std::string& id) const
{
    auto it = slots_.find(id);
    if (it == slots_.end()) throw NotFoundError("unknown item '" + id + "'");
    return *it->second;
}

void ReviewStore::apply(ReviewItem& item, const LogEntry& e) const
{
    if (e.version != item.version + 1) {
        throw InputError("decision log entry " + std::to_string(e.seq) + " skips a version of '" + item.id + "'");
    }
    HistoryEntry h{e.timestamp, e.reviewer, e.action, std::nullopt};
    switch (e.action) {
    case ReviewAction::accept: item.status = ReviewStatus::accepted; break;
    case ReviewAction::drop: item.status = ReviewStatus::dropped; break;
    case ReviewAction::edit:
        if (!e.body) throw InputError("decision log edit entry " + std::to_string(e.seq) + " has no body");
        item.body = trajectory::trajectory_from_json(*e.body);
        item.status = ReviewStatus::edited;
        h.body = item.body;
        break;
    }
    item.version = e.version;
    item.history.push_back(std::move(h));
}

LogEntry ReviewStore::append(const std::string& id, std::uint64_t version, ReviewAction action,
                             const std::string& reviewer, std::optional<json> body)
{
    std::lock_guard lock(log_mutex_);
    LogEntry e;
    e.seq = next_seq_;
    e.item = id;
    e.version = version;
    e.action = action;
    e.reviewer = reviewer;
    e.timestamp = clock_();
    e.body = std::move(body);
    e.payload_digest = sha256_hex(payload_of(e.action, e.reviewer, e.body).dump());
    e.prev_digest = head_;
    e.digest = entry_digest(e);
    const auto line = to_json(e).dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_file_) != line.size() || std::fflush(log_file_) != 0 ||
        ::fsync(fileno(log_file_)) != 0) {
        throw Error("failed to persist decision log entry");
    }
    head_ = e.digest;
    ++next_seq_;
    return e;
}

trajectory::ValidationReport ReviewStore::validate(const trajectory::Trajectory& body) const
{
    auto it = evidence_.find(body.instance_id);
    if (it != evidence_.end()) return trajectory::validate_trajectory(body, *corpus_, it->second);
    evidence::EvidenceRecord missing;
    missing.instance_id = body.instance_id;
    return trajectory::validate_trajectory(body, *corpus_, missing);
}

Page ReviewStore::list_items(std::optional<ReviewStatus> status, std::size_t page, std::size_t page_size) const
{
    if (page == 0 || page_size == 0) throw InputError("page and page_size must be positive");
    std::vector<ItemSummary> matching;
    for (const auto& id : order_) {
        const auto& s = slot(id);
        std::shared_lock lock(s.mutex);
        if (status && s.item.status != *status) continue;
        matching.push_back({s.item.id, s.item.body.instance_id, s.item.status, s.item.version});
    }
    Page p;
    p.total = matching.size();
    p.page = page;
    p.page_size = page_size;
    p.pages = (p.total + page_size - 1) / page_size;
    const std::size_t begin = std::min(p.total, (page - 1) * page_size);
    const std::size_t end = std::min(p.total, begin + page_size);
    p.items.assign(matching.begin() + static_cast<std::ptrdiff_t>(begin),
                   matching.begin() + static_cast<std::ptrdiff_t>(end));
    return p;
}

ReviewItem ReviewStore::get_item(const std::string& id) const
{
    const auto& s = slot(id);
    std::shared_lock lock(s.mutex);
    return s.item;
}

json ReviewStore::render_bundle(const std::string& id) const
{
    const auto item = get_item(id);
    const auto& body = item.body;
    const std::string base = "/items/" + id;
    json bundle{{"item", to_json(item)}};

    const auto* q = corpus_->find_instance(body.instance_id);
    bundle["qa"] = q ? json{{"id", q->id}, {"question", q->question}, {"answers", q->answers},
                            {"video_ref", q->video_ref}}
                     : json(nullptr);
    auto ev = evidence_.find(body.instance_id);
    bundle["evidence"] = ev != evidence_.end() ? evidence::to_json(ev->second) : json(nullptr);

    json clips = json::array();
    json crops = json::array();
    std::size_t call_index = 0;
    for (std::size_t t = 0; t < body.turns.size(); ++t) {
        const auto& call = body.turns[t].tool_call;
        if (!call) continue;
        if (call->name == trajectory::ToolName::clip) {
            json frames = json::array();
            for (int f : call->frames) frames.push_back({{"index", f}, {"url", base + "/frames/" + std::to_string(f)}});
            clips.push_back({{"call_index", call_index}, {"turn", t}, {"frames", std::move(frames)}});
        } else {
            crops.push_back({{"call_index", call_index},
                             {"turn", t},
                             {"frame", call->frame},
                             {"box", box_to_json(call->box)},
                             {"frame_url", base + "/frames/" + std::to_string(call->frame)},
                             {"crop_url", base + "/crops/" + std::to_string(call_index)}});
        }
        ++call_index;
    }
    bundle["clips"] = std::move(clips);
    bundle["crops"] = std::move(crops);
    json violations = json::array();
    for (const auto& v : validate(body).violations) violations.push_back(trajectory::to_json(v));
    bundle["violations"] = std::move(violations);
    return bundle;
}

Frame ReviewStore::frame_image(const std::string& id, int index) const
{
    const auto item = get_item(id);
    const auto& q = corpus_->instance(item.body.instance_id);
    const auto& video = corpus_->video(q.video_ref);
    if (index < 0 || static_cast<std::size_t>(index) >= video.frame_count()) {
        throw NotFoundError("frame " + std::to_string(index) + " not in video '" + video.ref + "'");
    }
    return video.frame(static_cast<std::size_t>(index));
}

Frame ReviewStore::crop_image(const std::string& id, std::size_t call_index) const
{
    const auto item = get_item(id);
    std::size_t k = 0;
    for (const auto& turn : item.body.turns) {
        if (!turn.tool_call) continue;
        if (k++ != call_index) continue;
        if (turn.tool_call->name != trajectory::ToolName::crop) {
            throw NotFoundError("tool call " + std::to_string(call_index) + " is not a crop");
        }
        return crop_pixels(frame_image(id, turn.tool_call->frame), turn.tool_call->box);
    }
    throw NotFoundError("item '" + id + "' has no tool call " + std::to_string(call_index));
}

ReviewItem ReviewStore::record_decision(const std::string& id, ReviewAction action, const std::string& reviewer,
                                        std::uint64_t expected_version)
{
    if (action == ReviewAction::edit) throw InputError("edits go through save_edit");
    auto& s = slot(id);
    std::unique_lock lock(s.mutex);
    if (s.item.version != expected_version) {
        throw ConflictError("item '" + id + "' is at version " + std::to_string(s.item.version) + ", expected " +
                                std::to_string(expected_version),
                            s.item.version);
    }
    if (action == ReviewAction::accept) {
        const auto report = validate(s.item.body);
        if (!report.ok()) throw ValidationFailed("item '" + id + "' does not validate", report.violations);
    }
    const auto e = append(id, s.item.version + 1, action, reviewer, std::nullopt);
    apply(s.item, e);
    return s.item;
}

ReviewItem ReviewStore::save_edit(const std::string& id, trajectory::Trajectory body, const std::string& reviewer,
                                  std::uint64_t expected_version)
{
    auto& s = slot(id);
    std::unique_lock lock(s.mutex);
    if (s.item.version != expected_version) {
        throw ConflictError("item '" + id + "' is at version " + std::to_string(s.item.version) + ", expected " +
                                std::to_string(expected_version),
                            s.item.version);
    }
    if (body.id != id) throw InputError("edited body id '" + body.id + "' does not match item '" + id + "'");
    body.provenance = trajectory::Provenance::edited;
    const auto report = validate(body);
    if (!report.ok()) throw ValidationFailed("edited body does not validate", report.violations);
    const auto e = append(id, s.item.version + 1, ReviewAction::edit, reviewer, trajectory_json(body));
    apply(s.item, e);
    return s.item;
}

ExportManifest ReviewStore::export_curated(const std::filesystem::path& path) const
{
    std::vector<std::shared_lock<std::shared_mutex>> locks;
    locks.reserve(order_.size());
    for (const auto& id : order_) locks.emplace_back(slot(id).mutex);
    std::lock_guard log_lock(log_mutex_);

    ExportManifest m;
    for (auto st : {ReviewStatus::pending, ReviewStatus::accepted, ReviewStatus::dropped, ReviewStatus::edited}) {
        m.counts[to_string(st)] = 0;
    }
    std::string lines;
    for (const auto& id : order_) {
        const auto& item = slot(id).item;
        ++m.counts[to_string(item.status)];
        if (item.status == ReviewStatus::accepted || item.status == ReviewStatus::edited) {
            lines += trajectory::to_json(item.body).dump() + "\n";
            ++m.exported;
        }
    }
    m.chain_head = head_;
    m.log_entries = next_seq_;

    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << lines) || !out.flush()) throw InputError("cannot write export " + path.string());
    std::ofstream man(path.string() + ".manifest.json", std::ios::binary);
    if (!man || !(man << to_json(m).dump(2) << "\n") || !man.flush()) {
        throw InputError("cannot write export manifest for " + path.string());
    }
    return m;
}

std::string ReviewStore::chain_head() const
{
    std::lock_guard lock(log_mutex_);
    return head_;
}

std::uint64_t ReviewStore::log_size() const
{
    std::lock_guard lock(log_mutex_);
    return next_seq_;
}

} // namespace vr4::qc
