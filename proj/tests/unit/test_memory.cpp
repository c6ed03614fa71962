#include "doctest.h"

#include "mtutor/memory/memory.hpp"

#include <random>

using namespace mtutor;
using namespace mtutor::memory;

namespace {

SessionContext session(std::string id = "s1", std::string student = "alice")
{
    SessionContext wm;
    wm.session_id = std::move(id);
    wm.student_id = std::move(student);
    return wm;
}

StudentProfile profile(std::string student = "alice")
{
    StudentProfile p;
    p.student_id = std::move(student);
    return p;
}

Observation mastery(std::string topic, double score)
{
    Observation o;
    o.kind = ObservationKind::mastery_evidence;
    o.topic = std::move(topic);
    o.score = score;
    return o;
}

Observation misconception(std::string tag, std::string session_id = "old", Millis at = 1)
{
    Observation o;
    o.kind = ObservationKind::misconception_signal;
    o.payload = std::move(tag);
    o.session_id = std::move(session_id);
    o.at = at;
    return o;
}

TurnSummary turn(std::string student, std::string tutor = "ok")
{
    TurnSummary t;
    t.session_id = "s1";
    t.student_text = std::move(student);
    t.tutor_text = std::move(tutor);
    return t;
}

} // namespace

TEST_CASE("an incorrect sign expansion yields a misconception signal")
{
    TurnSummary t = turn("-(x+2) = -x+2");
    t.graded = GradedStep{"linear-equations", false, false, "negative sign distribution", "dropped the sign"};
    auto d = dispatch(t, session(), profile());
    REQUIRE(d.ltm_writes.size() == 1);
    CHECK(d.ltm_writes[0].kind == ObservationKind::misconception_signal);
    CHECK(d.ltm_writes[0].payload == "negative sign distribution");
}

TEST_CASE("a greeting only appends the turn summary")
{
    auto d = dispatch(turn("hello there"), session(), profile());
    CHECK(d.ltm_writes.empty());
    REQUIRE(d.wm_updates.size() == 1);
    CHECK(d.wm_updates[0].kind == PatchKind::append_turn);
    CHECK(d.context_reads.empty());
}

TEST_CASE("a correct final answer yields full mastery evidence")
{
    TurnSummary t = turn("x = 2");
    t.graded = GradedStep{"T", true, true, std::nullopt, ""};
    auto d = dispatch(t, session(), profile());
    REQUIRE(d.ltm_writes.size() == 1);
    CHECK(d.ltm_writes[0].kind == ObservationKind::mastery_evidence);
    CHECK(*d.ltm_writes[0].topic == "T");
    CHECK(*d.ltm_writes[0].score == 1.0);
}

TEST_CASE("misconception signals need both an incorrect grade and a tag")
{
    TurnSummary t = turn("x = 3");
    t.graded = GradedStep{"T", false, true, std::nullopt, ""};
    CHECK(dispatch(t, session(), profile()).ltm_writes.empty());
    t.graded = GradedStep{"T", true, false, "sign", ""};
    CHECK(dispatch(t, session(), profile()).ltm_writes.empty());
}

TEST_CASE("dispatch rejects turns from another session")
{
    TurnSummary t = turn("hi");
    t.session_id = "other";
    CHECK_THROWS_AS(dispatch(t, session(), profile()), SessionMismatch);
}

TEST_CASE("stated preferences and goals are picked up")
{
    auto d = dispatch(turn("I prefer visual explanations. My goal is to pass the algebra exam."), session(), profile());
    REQUIRE(d.ltm_writes.size() == 2);
    CHECK(d.ltm_writes[0].kind == ObservationKind::preference_signal);
    CHECK(d.ltm_writes[0].payload == "visual");
    CHECK(d.ltm_writes[1].kind == ObservationKind::goal_stated);
    CHECK(d.ltm_writes[1].payload == "pass the algebra exam");
    // Mentioning a graph without a preference cue is not a preference.
    CHECK(dispatch(turn("what does the graph cross at?"), session(), profile()).ltm_writes.empty());
}

TEST_CASE("dispatch is pure")
{
    TurnSummary t = turn("I like examples. -(x+2) = -x+2");
    t.graded = GradedStep{"T", false, false, "negative sign distribution", ""};
    auto wm = session();
    auto p = profile();
    CHECK(dispatch(t, wm, p) == dispatch(t, wm, p));
    CHECK(to_json(dispatch(t, wm, p)).dump() == to_json(dispatch(t, wm, p)).dump());
}

TEST_CASE("EMA mastery updates")
{
    auto p = apply_observation(profile(), mastery("T", 1.0));
    CHECK(p.mastery.at("T") == doctest::Approx(0.65).epsilon(1e-12));
    auto q = apply_observation(profile(), mastery("U", 0.0));
    CHECK(q.mastery.at("U") == doctest::Approx(0.35).epsilon(1e-12));
}

TEST_CASE("repeated misconception signals count evidence without duplicates")
{
    auto p = apply_observation(profile(), misconception("sign"));
    p = apply_observation(p, misconception("sign"));
    REQUIRE(p.misconceptions.size() == 1);
    CHECK(p.misconceptions[0].evidence_count == 2);
}

TEST_CASE("invalid observations are rejected")
{
    Observation o;
    o.kind = ObservationKind::mastery_evidence;
    o.topic = "T";
    CHECK_THROWS_AS(apply_observation(profile(), o), PreconditionError);
    o.score = 1.5;
    CHECK_THROWS_AS(apply_observation(profile(), o), PreconditionError);
    Observation g;
    g.kind = ObservationKind::goal_stated;
    CHECK_THROWS_AS(apply_observation(profile(), g), PreconditionError);
}

TEST_CASE("mastery stays in [0,1] and evidence is loss-free under random sequences")
{
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = profile();
        std::map<std::string, int> sent;
        std::map<std::string, double> oracle;
        for (int i = 0; i < 50; ++i) {
            std::string const topic = "t" + std::to_string(pick(rng));
            if (pick(rng) < 3) {
                double const s = pick(rng) == 0 ? (pick(rng) % 2 ? 0.0 : 1.0) : score(rng);
                double const m = oracle.count(topic) ? oracle[topic] : 0.5;
                oracle[topic] = 0.7 * m + 0.3 * s;
                p = apply_observation(p, mastery(topic, s));
            } else {
                std::string const tag = "tag" + std::to_string(pick(rng));
                ++sent[tag];
                p = apply_observation(p, misconception(tag));
            }
        }
        for (auto const & [topic, m] : p.mastery) {
            CHECK(m >= 0.0);
            CHECK(m <= 1.0);
            CHECK(m == doctest::Approx(oracle.at(topic)).epsilon(1e-12));
        }
        CHECK(p.misconceptions.size() == sent.size());
        for (auto const & r : p.misconceptions)
            CHECK(r.evidence_count == sent.at(r.tag));
    }
}

TEST_CASE("active misconceptions follow the threshold rule")
{
    auto p = profile();
    for (int i = 0; i < 3; ++i)
        p = apply_observation(p, misconception("sign"));
    p = apply_observation(p, misconception("fractions"));
    auto ctx = retrieve_context(p, session(), "T");
    REQUIRE(ctx.active_misconceptions.size() == 1);
    CHECK(ctx.active_misconceptions[0].tag == "sign");

    // Seen in the current session counts even with one observation.
    auto wm = session();
    wm.pending.push_back(misconception("exponents", "s1"));
    ctx = retrieve_context(p, wm, "T");
    REQUIRE(ctx.active_misconceptions.size() == 2);
    CHECK(ctx.active_misconceptions[1].tag == "exponents");

    auto q = apply_observation(profile(), misconception("late", "s1"));
    CHECK(retrieve_context(q, session(), "T").active_misconceptions.size() == 1);
}

TEST_CASE("context ordering is total and deterministic")
{
    auto p = profile();
    for (std::string tag : {"b", "a", "c", "a", "b", "c", "c", "d", "d"})
        p = apply_observation(p, misconception(tag));
    auto ctx = retrieve_context(p, session(), "T");
    std::vector<std::string> tags;
    for (auto const & r : ctx.active_misconceptions)
        tags.push_back(r.tag);
    CHECK(tags == std::vector<std::string>{"c", "a", "b", "d"});

    std::shuffle(p.misconceptions.begin(), p.misconceptions.end(), std::mt19937(3));
    CHECK(retrieve_context(p, session(), "T") == ctx);
}

TEST_CASE("visual learners get plot hints")
{
    auto p = profile();
    p.learning_style.insert(LearningStyle::visual);
    auto ctx = retrieve_context(p, session(), "T");
    REQUIRE(ctx.style_hints.size() == 1);
    CHECK(ctx.style_hints[0].find("plot") != std::string::npos);
    CHECK(ctx.mastery_level == 0.5);
}

TEST_CASE("end_session promotes pending observations in arrival order")
{
    auto wm = session();
    wm.pending.push_back(mastery("T", 1.0));
    wm.pending.push_back(mastery("T", 0.0));
    CHECK_THROWS_AS(end_session(wm, profile(), 10), SessionStillActive);
    wm.closed = true;
    auto p = end_session(wm, profile(), 10);
    // 0.5 -> 0.65 -> 0.455; the reverse order would give 0.545.
    CHECK(p.mastery.at("T") == doctest::Approx(0.455).epsilon(1e-12));
    REQUIRE(p.history.size() == 1);
    CHECK(p.history[0].session_id == "s1");
}

TEST_CASE("an empty session only appends history")
{
    auto wm = session();
    wm.closed = true;
    auto before = profile();
    before.mastery["T"] = 0.8;
    auto after = end_session(wm, before, 5);
    REQUIRE(after.history.size() == 1);
    after.history.clear();
    CHECK(after == before);
}

TEST_CASE("session history keeps the last 20 sessions")
{
    auto p = profile();
    for (int i = 1; i <= 21; ++i) {
        auto wm = session("s" + std::to_string(i));
        wm.closed = true;
        p = end_session(wm, p, i);
    }
    REQUIRE(p.history.size() == 20);
    CHECK(p.history.front().session_id == "s2");
    CHECK(p.history.back().session_id == "s21");
}

TEST_CASE("working memory keeps the last 12 turns and monotone hints")
{
    auto wm = session();
    for (int i = 0; i < 30; ++i) {
        TurnSummary t = turn("turn " + std::to_string(i));
        apply_directives(wm, dispatch(t, wm, profile()));
        CHECK(wm.recent_turns.size() <= recent_turn_window);
    }
    CHECK(wm.recent_turns.size() == 12);
    CHECK(wm.recent_turns.front().find("turn 18") != std::string::npos);

    set_problem(wm, "ex1", "2");
    raise_hint(wm, 2);
    raise_hint(wm, 1);
    CHECK(wm.problem_state->hint_level == 2);
    raise_hint(wm, 9);
    CHECK(wm.problem_state->hint_level == 3);
    record_attempt(wm);
    set_problem(wm, "ex1", "2");
    CHECK(wm.problem_state->attempts == 1);
    set_problem(wm, "ex2", "5");
    CHECK(wm.problem_state->hint_level == 0);
}

TEST_CASE("turn summaries truncate to 200 characters")
{
    std::string const long_text(500, 'a');
    CHECK(summarize_turn(long_text, "b").size() == 200);
    CHECK(summarize_turn("hi", "hello") == "Student: hi Tutor: hello");
}

TEST_CASE("profile documents round trip")
{
    auto p = profile();
    p = apply_observation(p, mastery("T", 1.0));
    p = apply_observation(p, misconception("sign"));
    p.learning_style = {LearningStyle::visual, LearningStyle::formal};
    p.goals = {"pass"};
    p.history.push_back({"s0", "went fine", 4});
    auto const j = to_json(p);
    CHECK(j.at("schema_version") == 1);
    for (auto key : {"student_id", "mastery", "misconceptions", "learning_style", "goals", "history"})
        CHECK(j.contains(key));
    CHECK(profile_from_json(nlohmann::json::parse(j.dump())) == p);

    auto bad = j;
    bad["schema_version"] = 2;
    CHECK_THROWS_AS(profile_from_json(bad), Error);
    bad = j;
    bad["mastery"]["T"] = 1.5;
    CHECK_THROWS_AS(profile_from_json(bad), Error);

    auto wm = session();
    wm.current_topic = "T";
    wm.recent_turns = {"a", "b"};
    wm.pending.push_back(mastery("T", 1.0));
    set_problem(wm, "ex", "2");
    CHECK(session_from_json(nlohmann::json::parse(to_json(wm).dump())) == wm);
}
