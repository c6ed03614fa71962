#include "mtutor/platform/event_store.hpp"

#include "mtutor/common/digest.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mtutor::platform {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(StreamKind k)
{
    switch (k) {
    case StreamKind::session: return "session";
    case StreamKind::profile: return "profile";
    case StreamKind::course: return "course";
    case StreamKind::task: return "task";
    }
    return "?";
}

StreamKind stream_kind_from_string(std::string const & s)
{
    for (auto k : {StreamKind::session, StreamKind::profile, StreamKind::course, StreamKind::task})
        if (to_string(k) == s)
            return k;
    throw PreconditionError("unknown stream kind: " + s);
}

json to_json(EventRecord const & e)
{
    return {{"seq", e.seq},
            {"stream", to_string(e.stream)},
            {"id", e.stream_id},
            {"kind", e.kind},
            {"payload", e.payload},
            {"ts", e.timestamp}};
}

EventRecord event_from_json(json const & j)
{
    EventRecord e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.stream = stream_kind_from_string(j.at("stream").get<std::string>());
    e.stream_id = j.at("id").get<std::string>();
    e.kind = j.at("kind").get<std::string>();
    e.payload = j.at("payload");
    e.timestamp = j.at("ts").get<Millis>();
    return e;
}

CorruptEvent::CorruptEvent(std::string const & what, std::uint64_t seq, std::uint64_t offset)
    : Error(what), seq_(seq), offset_(offset)
{
}

bool valid_stream_id(std::string const & id)
{
    if (id.empty() || id.size() > 128 || id == "." || id == "..")
        return false;
    return std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '_' || c == '.';
    });
}

namespace {

void check_id(std::string const & id)
{
    if (!valid_stream_id(id))
        throw PreconditionError("invalid stream id: \"" + id + "\"");
}

std::string read_from(fs::path const & path, std::uint64_t offset)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return {};
    in.seekg(static_cast<std::streamoff>(offset));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string encode_line(json const & record)
{
    std::string const body = record.dump();
    char head[32];
    std::snprintf(head, sizeof head, "%08x %zu ", crc32_of(body), body.size());
    return head + body + "\n";
}

struct Scan
{
    std::vector<EventRecord> events;
    std::uint64_t last_seq = 0;
    std::uint64_t end_offset = 0;
};

/// Parse records starting at byte `base` of the log, expecting `first_seq`
/// next. `data` holds the bytes from `base` on.
Scan scan(std::string const & data, std::uint64_t base, std::uint64_t first_seq, fs::path const & path)
{
    Scan out;
    out.last_seq = first_seq - 1;
    std::size_t pos = 0;
    auto fail = [&](std::string const & why) -> CorruptEvent {
        std::uint64_t const seq = out.last_seq + 1;
        return CorruptEvent(path.string() + ": record " + std::to_string(seq) + " at byte "
                                + std::to_string(base + pos) + ": " + why,
                            seq, base + pos);
    };
    while (pos < data.size()) {
        auto const sp1 = data.find(' ', pos);
        if (sp1 == std::string::npos || sp1 != pos + 8)
            throw fail("truncated or malformed header");
        auto const sp2 = data.find(' ', sp1 + 1);
        if (sp2 == std::string::npos || sp2 == sp1 + 1 || sp2 - sp1 > 12)
            throw fail("truncated or malformed header");
        std::uint32_t crc = 0;
        std::size_t length = 0;
        try {
            std::size_t used = 0;
            crc = static_cast<std::uint32_t>(std::stoul(data.substr(pos, 8), &used, 16));
            if (used != 8)
                throw fail("bad checksum field");
            length = std::stoul(data.substr(sp1 + 1, sp2 - sp1 - 1), &used, 10);
            if (used != sp2 - sp1 - 1)
                throw fail("bad length field");
        } catch (std::logic_error const &) {
            throw fail("bad header field");
        }
        std::size_t const body_at = sp2 + 1;
        if (body_at + length + 1 > data.size())
            throw fail("record cut short");
        if (data[body_at + length] != '\n')
            throw fail("missing record terminator");
        std::string_view const body(data.data() + body_at, length);
        if (crc32_of(body) != crc)
            throw fail("checksum mismatch");
        EventRecord e;
        try {
            e = event_from_json(json::parse(body));
        } catch (std::exception const & ex) {
            throw fail(std::string("unreadable record: ") + ex.what());
        }
        if (e.seq != out.last_seq + 1)
            throw fail("sequence jumps to " + std::to_string(e.seq));
        out.last_seq = e.seq;
        out.events.push_back(std::move(e));
        pos = body_at + length + 1;
    }
    out.end_offset = base + pos;
    return out;
}

void write_all(int fd, std::string const & data)
{
    std::size_t done = 0;
    while (done < data.size()) {
        ssize_t const n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            int const err = errno;
            if (err == ENOSPC || err == EDQUOT)
                throw StorageFull(std::string("event log write failed: ") + std::strerror(err));
            throw Error(std::string("event log write failed: ") + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
}

void sync_dir(fs::path const & dir)
{
    int const fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd < 0)
        return;
    ::fsync(fd);
    ::close(fd);
}

} // namespace

EventStore::EventStore(fs::path root, StoreOptions options) : root_(std::move(root)), options_(options)
{
    if (options_.snapshot_every == 0)
        throw PreconditionError("snapshot cadence must be positive");
}

fs::path EventStore::log_path(StreamKind stream, std::string const & id) const
{
    return root_ / "events" / to_string(stream) / (id + ".log");
}

bool EventStore::snapshot_due(std::uint64_t seq) const
{
    return seq > 0 && seq % options_.snapshot_every == 0;
}

bool EventStore::exists(StreamKind stream, std::string const & id) const
{
    return valid_stream_id(id) && fs::exists(log_path(stream, id));
}

std::vector<std::string> EventStore::stream_ids(StreamKind stream) const
{
    std::vector<std::string> out;
    fs::path const dir = root_ / "events" / to_string(stream);
    if (!fs::exists(dir))
        return out;
    for (auto const & entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".log")
            out.push_back(entry.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint64_t> EventStore::snapshot_seqs(StreamKind stream, std::string const & id) const
{
    std::vector<std::uint64_t> out;
    fs::path const dir = root_ / "snapshots" / to_string(stream);
    if (!fs::exists(dir))
        return out;
    std::string const prefix = id + ".";
    for (auto const & entry : fs::directory_iterator(dir)) {
        std::string const name = entry.path().filename().string();
        if (name.size() <= prefix.size() + 5 || name.compare(0, prefix.size(), prefix) != 0
            || name.substr(name.size() - 5) != ".json")
            continue;
        std::string const digits = name.substr(prefix.size(), name.size() - prefix.size() - 5);
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit))
            continue;
        out.push_back(std::stoull(digits));
    }
    std::sort(out.begin(), out.end());
    return out;
}

StreamTail EventStore::load(StreamKind stream, std::string const & id) const
{
    check_id(id);
    fs::path const log = log_path(stream, id);
    StreamTail tail;
    if (!fs::exists(log))
        return tail;
    std::uint64_t const size = fs::file_size(log);

    std::uint64_t base = 0;
    auto seqs = snapshot_seqs(stream, id);
    for (auto it = seqs.rbegin(); it != seqs.rend(); ++it) {
        fs::path const p = root_ / "snapshots" / to_string(stream) / (id + "." + std::to_string(*it) + ".json");
        try {
            std::ifstream in(p);
            json const doc = json::parse(in);
            auto const offset = doc.at("offset").get<std::uint64_t>();
            // A snapshot past the end of the log describes writes the log no
            // longer holds; fall back to an older one.
            if (offset > size || doc.at("seq").get<std::uint64_t>() != *it)
                continue;
            tail.snapshot = doc.at("state");
            tail.snapshot_seq = *it;
            base = offset;
            break;
        } catch (std::exception const &) {
            continue;
        }
    }

    Scan s = scan(read_from(log, base), base, tail.snapshot_seq + 1, log);
    tail.events = std::move(s.events);
    tail.last_seq = s.last_seq;
    return tail;
}

std::vector<EventRecord> EventStore::load_stream(StreamKind stream, std::string const & id) const
{
    check_id(id);
    fs::path const log = log_path(stream, id);
    if (!fs::exists(log))
        return {};
    return scan(read_from(log, 0), 0, 1, log).events;
}

EventStore::Cursor & EventStore::cursor(StreamKind stream, std::string const & id)
{
    auto const key = std::make_pair(stream, id);
    if (auto it = cursors_.find(key); it != cursors_.end())
        return it->second;
    Cursor c;
    fs::path const log = log_path(stream, id);
    if (fs::exists(log)) {
        StreamTail const t = load(stream, id);
        c.last_seq = t.last_seq;
        c.end_offset = fs::file_size(log);
    }
    return cursors_.emplace(key, c).first->second;
}

EventRecord EventStore::append(StreamKind stream, std::string const & id, std::string kind, json payload,
                               Millis timestamp)
{
    check_id(id);
    if (kind.empty())
        throw PreconditionError("event kind must not be empty");
    std::lock_guard lock(mutex_);
    Cursor & c = cursor(stream, id);

    EventRecord e{c.last_seq + 1, stream, id, std::move(kind), std::move(payload), timestamp};
    std::string const line = encode_line(to_json(e));
    if (options_.max_log_bytes != 0 && c.end_offset + line.size() > options_.max_log_bytes)
        throw StorageFull("log " + log_path(stream, id).string() + " would exceed "
                          + std::to_string(options_.max_log_bytes) + " bytes");

    fs::path const log = log_path(stream, id);
    bool const fresh = !fs::exists(log);
    if (fresh)
        fs::create_directories(log.parent_path());
    int const fd = ::open(log.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0)
        throw Error("cannot open " + log.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, line);
        if (::fsync(fd) != 0)
            throw Error("fsync failed on " + log.string() + ": " + std::strerror(errno));
    } catch (...) {
        // Leave no partial record behind for the next append to trip over.
        [[maybe_unused]] int const rc = ::ftruncate(fd, static_cast<off_t>(c.end_offset));
        ::close(fd);
        throw;
    }
    ::close(fd);
    if (fresh)
        sync_dir(log.parent_path());

    c.last_seq = e.seq;
    c.end_offset += line.size();
    return e;
}

void EventStore::write_snapshot(StreamKind stream, std::string const & id, std::uint64_t seq, json const & state)
{
    check_id(id);
    std::lock_guard lock(mutex_);
    Cursor & c = cursor(stream, id);
    if (seq != c.last_seq)
        throw PreconditionError("snapshot seq " + std::to_string(seq) + " is not the last appended seq "
                                + std::to_string(c.last_seq));
    fs::path const dir = root_ / "snapshots" / to_string(stream);
    fs::create_directories(dir);
    fs::path const final_path = dir / (id + "." + std::to_string(seq) + ".json");
    fs::path const tmp = dir / (id + "." + std::to_string(seq) + ".tmp");
    std::string const body = json{{"seq", seq}, {"offset", c.end_offset}, {"state", state}}.dump();
    int const fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0)
        throw Error("cannot open " + tmp.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, body);
        ::fsync(fd);
    } catch (...) {
        ::close(fd);
        fs::remove(tmp);
        throw;
    }
    ::close(fd);
    fs::rename(tmp, final_path);
    sync_dir(dir);
}

std::uint64_t EventStore::truncate_corrupt_tail(StreamKind stream, std::string const & id)
{
    check_id(id);
    std::lock_guard lock(mutex_);
    fs::path const log = log_path(stream, id);
    if (!fs::exists(log))
        return 0;
    std::string const data = read_from(log, 0);
    std::uint64_t cut = 0;
    try {
        scan(data, 0, 1, log);
        return 0;
    } catch (CorruptEvent const & e) {
        cut = e.offset();
        // Only the final record may be dropped: a damaged record in the
        // middle means acknowledged data was lost.
        auto const nl = data.find('\n', cut);
        if (nl != std::string::npos && nl + 1 < data.size())
            throw;
    }
    std::uint64_t const dropped = data.size() - cut;
    fs::resize_file(log, cut);
    cursors_.erase({stream, id});
    return dropped;
}

} // namespace mtutor::platform
