#pragma once

#include "mtutor/common/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mtutor::platform {

using Millis = std::int64_t;

enum class StreamKind { session, profile, course, task };

std::string to_string(StreamKind k);
StreamKind stream_kind_from_string(std::string const & s);

struct EventRecord
{
    std::uint64_t seq = 0;
    StreamKind stream = StreamKind::session;
    std::string stream_id;
    std::string kind;
    nlohmann::json payload;
    Millis timestamp = 0;

    bool operator==(EventRecord const &) const = default;
};

nlohmann::json to_json(EventRecord const & e);
EventRecord event_from_json(nlohmann::json const & j);

/// A record failed its checksum, was cut short, or broke the sequence.
/// Everything before `seq` is intact.
class CorruptEvent : public Error
{
public:
    CorruptEvent(std::string const & what, std::uint64_t seq, std::uint64_t offset);
    [[nodiscard]] std::uint64_t seq() const { return seq_; }
    /// Byte offset of the bad record in its log.
    [[nodiscard]] std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t seq_;
    std::uint64_t offset_;
};

class StorageFull : public Error
{
public:
    using Error::Error;
};

inline constexpr std::uint64_t default_snapshot_every = 100;

struct StoreOptions
{
    std::uint64_t snapshot_every = default_snapshot_every;
    /// Refuse appends that would grow a single log past this many bytes.
    /// Zero means no limit beyond the disk itself.
    std::uint64_t max_log_bytes = 0;
};

/// What a stream looks like on disk: the newest usable snapshot and the
/// records written after it.
struct StreamTail
{
    std::optional<nlohmann::json> snapshot;
    std::uint64_t snapshot_seq = 0;
    std::vector<EventRecord> events;
    std::uint64_t last_seq = 0;
};

/// Append-only per-stream logs under `<root>/events/<stream>/<id>.log`,
/// one record per line:
///
///     <crc32 as 8 hex digits> <byte length> <json>\n
///
/// An append is flushed to the device before it returns. Snapshots live in
/// `<root>/snapshots/<stream>/<id>.<seq>.json` and remember the log offset
/// they cover, so a reload reads only the tail behind them.
class EventStore
{
public:
    explicit EventStore(std::filesystem::path root, StoreOptions options = {});

    [[nodiscard]] std::filesystem::path const & root() const { return root_; }
    [[nodiscard]] StoreOptions const & options() const { return options_; }

    /// Assigns the next seq for the stream. Throws CorruptEvent when the
    /// existing log is damaged and StorageFull when the write cannot fit.
    EventRecord append(StreamKind stream, std::string const & id, std::string kind, nlohmann::json payload,
                       Millis timestamp);

    /// True when the last append to this stream landed on the snapshot cadence.
    [[nodiscard]] bool snapshot_due(std::uint64_t seq) const;

    /// Record the folded state as of `seq`, which must be the stream's last
    /// appended seq. Written to a temporary file and renamed into place.
    void write_snapshot(StreamKind stream, std::string const & id, std::uint64_t seq, nlohmann::json const & state);

    /// Snapshot plus tail. Throws CorruptEvent on a damaged record.
    [[nodiscard]] StreamTail load(StreamKind stream, std::string const & id) const;

    /// Every record of the stream from the start of the log.
    [[nodiscard]] std::vector<EventRecord> load_stream(StreamKind stream, std::string const & id) const;

    [[nodiscard]] bool exists(StreamKind stream, std::string const & id) const;
    [[nodiscard]] std::vector<std::string> stream_ids(StreamKind stream) const;
    [[nodiscard]] std::vector<std::uint64_t> snapshot_seqs(StreamKind stream, std::string const & id) const;

    [[nodiscard]] std::filesystem::path log_path(StreamKind stream, std::string const & id) const;

    /// Cut a damaged final record so appends can resume. Returns the number
    /// of bytes dropped. A damaged record followed by good ones is left
    /// alone and reported as CorruptEvent.
    std::uint64_t truncate_corrupt_tail(StreamKind stream, std::string const & id);

private:
    struct Cursor
    {
        std::uint64_t last_seq = 0;
        std::uint64_t end_offset = 0;
    };

    Cursor & cursor(StreamKind stream, std::string const & id);

    std::filesystem::path root_;
    StoreOptions options_;
    std::mutex mutex_;
    std::map<std::pair<StreamKind, std::string>, Cursor> cursors_;
};

/// Stream ids become file names, so they are limited to [A-Za-z0-9._-].
bool valid_stream_id(std::string const & id);

} // namespace mtutor::platform
