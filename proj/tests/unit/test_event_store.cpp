#include "doctest.h"

#include "mtutor/common/digest.hpp"
#include "mtutor/platform/state.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

using namespace mtutor;
using namespace mtutor::platform;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir
{
    fs::path path;
    TempDir()
    {
        static int n = 0;
        path = fs::temp_directory_path() / ("mtutor-es-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

memory::Observation random_observation(std::mt19937 & rng, int i)
{
    static char const * topics[] = {"linear equations", "fractions", "quadratics", "negative numbers"};
    static char const * styles[] = {"visual", "verbal", "example_driven", "formal"};
    memory::Observation o;
    o.at = 1000 + i;
    o.session_id = "s" + std::to_string(i / 10);
    switch (rng() % 4) {
    case 0:
        o.kind = memory::ObservationKind::mastery_evidence;
        o.topic = topics[rng() % 4];
        o.score = static_cast<double>(rng() % 1001) / 1000.0;
        break;
    case 1:
        o.kind = memory::ObservationKind::misconception_signal;
        o.payload = rng() % 2 ? "negative sign distribution" : "sign error";
        o.topic = topics[rng() % 4];
        break;
    case 2:
        o.kind = memory::ObservationKind::preference_signal;
        o.payload = styles[rng() % 4];
        break;
    default:
        o.kind = memory::ObservationKind::goal_stated;
        o.payload = "goal " + std::to_string(rng() % 5);
        break;
    }
    return o;
}

memory::StudentProfile created(std::string const & id)
{
    memory::StudentProfile p;
    p.student_id = id;
    p.created_at = p.updated_at = 1;
    return p;
}

/// Writes `n` profile events and returns the state and log size after each.
struct History
{
    std::vector<memory::StudentProfile> states;  // states[k] after k events
    std::vector<std::uintmax_t> sizes;           // sizes[k] after k events
};

History write_profile_history(EventStore & store, std::string const & id, int n, unsigned seed)
{
    std::mt19937 rng(seed);
    History h;
    h.states.push_back({});
    h.sizes.push_back(0);
    memory::StudentProfile state;
    state = commit(store, StreamKind::profile, id, events::profile_created, memory::to_json(created(id)), 1, state);
    h.states.push_back(state);
    h.sizes.push_back(fs::file_size(store.log_path(StreamKind::profile, id)));
    for (int i = 1; i < n; ++i) {
        state = commit(store, StreamKind::profile, id, events::profile_observation,
                       memory::to_json(random_observation(rng, i)), 1000 + i, state);
        h.states.push_back(state);
        h.sizes.push_back(fs::file_size(store.log_path(StreamKind::profile, id)));
    }
    return h;
}

/// Copy the store at `src` into `dst` as it would look after a crash that
/// left `log_bytes` of the profile log on disk. Snapshots with a seq above
/// `keep_snapshots_upto` are treated as never written.
void crash_copy(fs::path const & src, fs::path const & dst, std::string const & id, std::uintmax_t log_bytes,
                std::uint64_t keep_snapshots_upto)
{
    fs::remove_all(dst);
    fs::create_directories(dst / "events" / "profile");
    fs::path const log = src / "events" / "profile" / (id + ".log");
    fs::copy_file(log, dst / "events" / "profile" / (id + ".log"));
    fs::resize_file(dst / "events" / "profile" / (id + ".log"), log_bytes);
    fs::path const snaps = src / "snapshots" / "profile";
    if (fs::exists(snaps)) {
        fs::create_directories(dst / "snapshots" / "profile");
        for (auto const & e : fs::directory_iterator(snaps)) {
            std::string const name = e.path().filename().string();
            auto const seq = std::stoull(name.substr(id.size() + 1));
            if (seq <= keep_snapshots_upto)
                fs::copy_file(e.path(), dst / "snapshots" / "profile" / name);
        }
    }
}

} // namespace

TEST_CASE("three profile events fold to the in-memory profile")
{
    TempDir dir;
    EventStore store(dir.path);
    memory::StudentProfile mem = created("alice");
    memory::StudentProfile folded;
    folded = commit(store, StreamKind::profile, "alice", events::profile_created, memory::to_json(mem), 1, folded);
    std::mt19937 rng(7);
    for (int i = 0; i < 2; ++i) {
        auto const o = random_observation(rng, i);
        mem = memory::apply_observation(mem, o);
        folded = commit(store, StreamKind::profile, "alice", events::profile_observation, memory::to_json(o), 2 + i,
                        folded);
    }
    CHECK(folded == mem);

    EventStore reopened(dir.path);
    auto const replayed = replay<memory::StudentProfile>(reopened, StreamKind::profile, "alice");
    REQUIRE(replayed);
    CHECK(*replayed == mem);
    auto const records = reopened.load_stream(StreamKind::profile, "alice");
    REQUIRE(records.size() == 3);
    CHECK(records[0].seq == 1);
    CHECK(records[2].seq == 3);
    CHECK(records[1].kind == "observation");
}

TEST_CASE("record line format carries checksum and length")
{
    TempDir dir;
    EventStore store(dir.path);
    store.append(StreamKind::course, "c1", "created", {{"x", 1}}, 5);
    std::ifstream in(store.log_path(StreamKind::course, "c1"));
    std::string line;
    std::getline(in, line);
    auto const sp1 = line.find(' ');
    auto const sp2 = line.find(' ', sp1 + 1);
    REQUIRE(sp1 == 8);
    std::string const body = line.substr(sp2 + 1);
    CHECK(std::stoul(line.substr(sp1 + 1, sp2 - sp1 - 1)) == body.size());
    CHECK(std::stoul(line.substr(0, 8), nullptr, 16) == crc32_of(body));
    CHECK(json::parse(body)["seq"] == 1);
}

TEST_CASE("seq is per stream and strictly increasing")
{
    TempDir dir;
    EventStore store(dir.path);
    CHECK(store.append(StreamKind::session, "a", "opened", {{"student_id", "x"}}, 1).seq == 1);
    CHECK(store.append(StreamKind::session, "b", "opened", {{"student_id", "x"}}, 1).seq == 1);
    CHECK(store.append(StreamKind::session, "a", "closed", json::object(), 2).seq == 2);
    CHECK(store.append(StreamKind::profile, "a", "created", memory::to_json(created("a")), 2).seq == 1);
    EventStore reopened(dir.path);
    CHECK(reopened.append(StreamKind::session, "a", "closed", json::object(), 3).seq == 3);
    CHECK(reopened.stream_ids(StreamKind::session) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("stream ids are restricted to safe file names")
{
    TempDir dir;
    EventStore store(dir.path);
    CHECK_THROWS_AS(store.append(StreamKind::task, "../escape", "created", json::object(), 1), PreconditionError);
    CHECK_THROWS_AS(store.append(StreamKind::task, "", "created", json::object(), 1), PreconditionError);
    CHECK_FALSE(valid_stream_id("a/b"));
    CHECK(valid_stream_id("ex-0123abcd.v2_x"));
}

TEST_CASE("250 events leave two snapshots and a replay tail of at most 50")
{
    TempDir dir;
    EventStore store(dir.path);
    auto const h = write_profile_history(store, "bob", 250, 11);
    CHECK(store.snapshot_seqs(StreamKind::profile, "bob") == std::vector<std::uint64_t>{100, 200});

    EventStore reopened(dir.path);
    StreamTail const tail = reopened.load(StreamKind::profile, "bob");
    REQUIRE(tail.snapshot);
    CHECK(tail.snapshot_seq == 200);
    CHECK(tail.events.size() == 50);
    CHECK(tail.events.front().seq == 201);
    CHECK(tail.last_seq == 250);
    CHECK(*replay<memory::StudentProfile>(reopened, StreamKind::profile, "bob") == h.states.back());
}

TEST_CASE("truncated final record raises CorruptEvent naming its seq")
{
    TempDir dir;
    EventStore store(dir.path);
    auto const h = write_profile_history(store, "carol", 5, 3);
    fs::path const log = store.log_path(StreamKind::profile, "carol");
    fs::resize_file(log, h.sizes[5] - 7);

    EventStore reopened(dir.path);
    try {
        (void)reopened.load(StreamKind::profile, "carol");
        FAIL("expected CorruptEvent");
    } catch (CorruptEvent const & e) {
        CHECK(e.seq() == 5);
        CHECK(e.offset() == h.sizes[4]);
        CHECK(std::string(e.what()).find("record 5") != std::string::npos);
    }
    CHECK_THROWS_AS(reopened.append(StreamKind::profile, "carol", "observation", json::object(), 9), CorruptEvent);

    CHECK(reopened.truncate_corrupt_tail(StreamKind::profile, "carol") == h.sizes[5] - 7 - h.sizes[4]);
    CHECK(*replay<memory::StudentProfile>(reopened, StreamKind::profile, "carol") == h.states[4]);
    CHECK(reopened.append(StreamKind::profile, "carol", "observation",
                          memory::to_json(memory::Observation{memory::ObservationKind::goal_stated, std::nullopt,
                                                              std::nullopt, "pass", "", 5, "s"}),
                          10)
              .seq
          == 5);
}

TEST_CASE("a damaged record in the middle is reported and not silently dropped")
{
    TempDir dir;
    EventStore store(dir.path);
    auto const h = write_profile_history(store, "dave", 6, 5);
    fs::path const log = store.log_path(StreamKind::profile, "dave");
    {
        std::fstream f(log, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(h.sizes[2] + 30));
        f.put('#');
    }
    EventStore reopened(dir.path);
    try {
        (void)reopened.load_stream(StreamKind::profile, "dave");
        FAIL("expected CorruptEvent");
    } catch (CorruptEvent const & e) {
        CHECK(e.seq() == 3);
    }
    CHECK_THROWS_AS(reopened.truncate_corrupt_tail(StreamKind::profile, "dave"), CorruptEvent);
    CHECK(fs::file_size(log) == h.sizes[6]);
}

TEST_CASE("kill-and-replay at every acknowledged append boundary")
{
    TempDir dir;
    EventStore store(dir.path / "live");
    int const n = 230;
    auto const h = write_profile_history(store, "eve", n, 21);
    fs::path const crash = dir.path / "crash";

    for (int k = 1; k <= n; ++k) {
        // Crash right after the k-th acknowledged append, with and without
        // the snapshot that append may have triggered.
        for (std::uint64_t keep : {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(k - 1)}) {
            crash_copy(dir.path / "live", crash, "eve", h.sizes[k], keep);
            EventStore reopened(crash);
            auto const state = replay<memory::StudentProfile>(reopened, StreamKind::profile, "eve");
            REQUIRE(state);
            CHECK_MESSAGE(*state == h.states[k], "boundary " << k << " keep " << keep);
        }
        // Crash halfway through writing record k+1.
        if (k < n) {
            crash_copy(dir.path / "live", crash, "eve", (h.sizes[k] + h.sizes[k + 1]) / 2, k);
            EventStore reopened(crash);
            try {
                (void)replay<memory::StudentProfile>(reopened, StreamKind::profile, "eve");
                FAIL("torn write at " << k << " went unnoticed");
            } catch (CorruptEvent const & e) {
                CHECK(e.seq() == static_cast<std::uint64_t>(k + 1));
            }
            reopened.truncate_corrupt_tail(StreamKind::profile, "eve");
            CHECK(*replay<memory::StudentProfile>(reopened, StreamKind::profile, "eve") == h.states[k]);
        }
    }
}

TEST_CASE("snapshots past the surviving log are ignored")
{
    TempDir dir;
    EventStore store(dir.path / "live");
    auto const h = write_profile_history(store, "fay", 120, 9);
    // The log lost everything after record 60 but snapshot 100 survived.
    crash_copy(dir.path / "live", dir.path / "crash", "fay", h.sizes[60], 1000);
    EventStore reopened(dir.path / "crash");
    StreamTail const tail = reopened.load(StreamKind::profile, "fay");
    CHECK_FALSE(tail.snapshot);
    CHECK(tail.last_seq == 60);
    CHECK(*replay<memory::StudentProfile>(reopened, StreamKind::profile, "fay") == h.states[60]);
}

TEST_CASE("an unreadable snapshot falls back to the log")
{
    TempDir dir;
    EventStore store(dir.path);
    auto const h = write_profile_history(store, "gus", 140, 4);
    std::ofstream(dir.path / "snapshots" / "profile" / "gus.100.json") << "{not json";
    EventStore reopened(dir.path);
    StreamTail const tail = reopened.load(StreamKind::profile, "gus");
    CHECK_FALSE(tail.snapshot);
    CHECK(tail.events.size() == 140);
    CHECK(*replay<memory::StudentProfile>(reopened, StreamKind::profile, "gus") == h.states[140]);
}

TEST_CASE("a full log refuses the append and stays intact")
{
    TempDir dir;
    StoreOptions opts;
    opts.max_log_bytes = 600;
    EventStore store(dir.path, opts);
    std::uint64_t last = 0;
    bool full = false;
    for (int i = 0; i < 20 && !full; ++i) {
        try {
            last = store.append(StreamKind::task, "t", "graded", {{"result", "correct"}, {"i", i}}, i).seq;
        } catch (StorageFull const &) {
            full = true;
        }
    }
    REQUIRE(full);
    auto const size = fs::file_size(store.log_path(StreamKind::task, "t"));
    CHECK(size <= 600);
    auto const records = store.load_stream(StreamKind::task, "t");
    CHECK(records.size() == last);
    CHECK_THROWS_AS(store.append(StreamKind::task, "t", "graded", {{"result", "correct"}}, 99), StorageFull);
    CHECK(fs::file_size(store.log_path(StreamKind::task, "t")) == size);
}

TEST_CASE("concurrent appends to one stream get distinct consecutive seqs")
{
    TempDir dir;
    EventStore store(dir.path);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&store, t] {
            for (int i = 0; i < 25; ++i)
                store.append(StreamKind::session, "shared", "turn", {{"t", t}, {"i", i}}, i);
        });
    for (auto & th : threads)
        th.join();
    auto const records = EventStore(dir.path).load_stream(StreamKind::session, "shared");
    REQUIRE(records.size() == 100);
    for (std::size_t i = 0; i < records.size(); ++i)
        CHECK(records[i].seq == i + 1);
}

TEST_CASE("course and task streams fold through their transitions")
{
    TempDir dir;
    EventStore store(dir.path);
    course::CourseDag dag;
    dag.course_id = "course-1";
    dag.student_id = "s";
    dag.nodes = {{"a", "A", {}, {}, {}, course::NodeStatus::locked}, {"b", "B", {}, {}, {}, course::NodeStatus::locked}};
    dag.edges = {{"a", "b"}};
    course::assign_initial_status(dag);
    course::CourseDag state;
    state = commit(store, StreamKind::course, dag.course_id, events::course_created, course::to_json(dag), 1, state);
    state = commit(store, StreamKind::course, dag.course_id, events::course_node_completed, {{"node_id", "a"}}, 2,
                   state);
    auto const replayed = replay<course::CourseDag>(store, StreamKind::course, "course-1");
    REQUIRE(replayed);
    CHECK(*replayed == state);
    CHECK(replayed->nodes[1].status == course::NodeStatus::available);
    CHECK(course::status_invariant_holds(*replayed));

    EventRecord bogus{3, StreamKind::course, "course-1", "exploded", json::object(), 3};
    CHECK_THROWS_AS(apply_event(state, bogus), CorruptEvent);
}
