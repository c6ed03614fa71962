#include "mtutor/memory/memory.hpp"

#include "mtutor/common/text.hpp"

#include <algorithm>
#include <array>

namespace mtutor::memory {

using nlohmann::json;

namespace {

struct StyleCue
{
    LearningStyle style;
    std::array<char const *, 5> words;
};

constexpr std::array<char const *, 7> preference_cues{"prefer", "i like", "helps me", "easier for me", "i learn",
                                                      "show me", "i understand"};

constexpr std::array<StyleCue, 4> style_cues{{
    {LearningStyle::visual, {"visual", "picture", "graph", "plot", "diagram"}},
    {LearningStyle::example_driven, {"example", "worked problem", "worked solution", "", ""}},
    {LearningStyle::formal, {"formal", "proof", "rigorous", "definition", ""}},
    {LearningStyle::verbal, {"in words", "verbal", "talk it through", "explain it", ""}},
}};

constexpr std::array<char const *, 4> goal_cues{"my goal is", "i want to learn", "i want to get better at",
                                                "i need to learn"};

std::string strip_goal(std::string s)
{
    s = text::trim(s);
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == ','))
        s.pop_back();
    if (text::starts_with_ci(s, "to "))
        s = s.substr(3);
    return text::trim(s);
}

std::optional<std::string> stated_goal(std::string const & student)
{
    std::string const folded = text::fold_case(student);
    for (char const * cue : goal_cues) {
        auto pos = folded.find(cue);
        if (pos == std::string::npos)
            continue;
        std::string rest = student.substr(pos + std::string_view(cue).size());
        auto stop = rest.find_first_of(".!?\n");
        if (stop != std::string::npos)
            rest.resize(stop);
        rest = strip_goal(rest);
        if (!rest.empty())
            return rest;
    }
    return std::nullopt;
}

std::vector<LearningStyle> stated_preferences(std::string const & student)
{
    std::vector<LearningStyle> out;
    bool const cued = std::any_of(preference_cues.begin(), preference_cues.end(),
                                  [&](char const * c) { return text::contains_ci(student, c); });
    if (!cued)
        return out;
    for (auto const & cue : style_cues)
        for (char const * w : cue.words)
            if (*w && text::contains_ci(student, w)) {
                out.push_back(cue.style);
                break;
            }
    return out;
}

MisconceptionRecord * find_record(StudentProfile & p, std::string const & tag)
{
    for (auto & r : p.misconceptions)
        if (r.tag == tag)
            return &r;
    return nullptr;
}

std::string session_paragraph(SessionContext const & wm)
{
    std::size_t n_mastery = 0;
    std::size_t n_correct = 0;
    std::vector<std::string> tags;
    for (auto const & o : wm.pending) {
        if (o.kind == ObservationKind::mastery_evidence) {
            ++n_mastery;
            if (o.score && *o.score >= 1.0)
                ++n_correct;
        } else if (o.kind == ObservationKind::misconception_signal) {
            if (std::find(tags.begin(), tags.end(), o.payload) == tags.end())
                tags.push_back(o.payload);
        }
    }
    std::string s = "Session " + wm.session_id + ": " + std::to_string(wm.recent_turns.size()) + " turns";
    if (wm.current_topic)
        s += " on " + *wm.current_topic;
    s += "; " + std::to_string(n_correct) + " of " + std::to_string(n_mastery) + " graded answers correct";
    if (!tags.empty())
        s += "; misconceptions seen: " + text::join(tags, ", ");
    return s + ".";
}

} // namespace

std::string to_string(LearningStyle s)
{
    switch (s) {
    case LearningStyle::visual: return "visual";
    case LearningStyle::verbal: return "verbal";
    case LearningStyle::example_driven: return "example_driven";
    case LearningStyle::formal: return "formal";
    }
    return "?";
}

LearningStyle learning_style_from_string(std::string const & s)
{
    for (auto style : {LearningStyle::visual, LearningStyle::verbal, LearningStyle::example_driven,
                       LearningStyle::formal})
        if (to_string(style) == s)
            return style;
    throw PreconditionError("unknown learning style: " + s);
}

std::string to_string(ObservationKind k)
{
    switch (k) {
    case ObservationKind::mastery_evidence: return "mastery_evidence";
    case ObservationKind::misconception_signal: return "misconception_signal";
    case ObservationKind::preference_signal: return "preference_signal";
    case ObservationKind::goal_stated: return "goal_stated";
    }
    return "?";
}

namespace {

ObservationKind kind_from_string(std::string const & s)
{
    for (auto k : {ObservationKind::mastery_evidence, ObservationKind::misconception_signal,
                   ObservationKind::preference_signal, ObservationKind::goal_stated})
        if (to_string(k) == s)
            return k;
    throw PreconditionError("unknown observation kind: " + s);
}

std::string to_string(PatchKind k)
{
    switch (k) {
    case PatchKind::append_turn: return "append_turn";
    case PatchKind::set_topic: return "set_topic";
    case PatchKind::add_fact: return "add_fact";
    }
    return "?";
}

} // namespace

double StudentProfile::mastery_of(std::string const & topic) const
{
    auto it = mastery.find(topic);
    return it == mastery.end() ? mastery_prior : it->second;
}

MisconceptionRecord const * StudentProfile::misconception(std::string const & tag) const
{
    for (auto const & r : misconceptions)
        if (r.tag == tag)
            return &r;
    return nullptr;
}

void validate(Observation const & obs)
{
    switch (obs.kind) {
    case ObservationKind::mastery_evidence:
        if (!obs.topic || obs.topic->empty() || !obs.score)
            throw PreconditionError("mastery_evidence needs a topic and a score");
        if (!(*obs.score >= 0.0 && *obs.score <= 1.0))
            throw PreconditionError("mastery score outside [0,1]");
        break;
    case ObservationKind::misconception_signal:
        if (obs.payload.empty())
            throw PreconditionError("misconception_signal needs a tag");
        break;
    case ObservationKind::preference_signal:
        (void)learning_style_from_string(obs.payload);
        break;
    case ObservationKind::goal_stated:
        if (text::trim(obs.payload).empty())
            throw PreconditionError("goal_stated needs goal text");
        break;
    }
}

std::string summarize_turn(std::string const & student_text, std::string const & tutor_text)
{
    std::string const s = text::normalize_whitespace("Student: " + student_text + " Tutor: " + tutor_text);
    return text::truncate_utf8(s, summary_chars);
}

MemoryDirectives dispatch(TurnSummary const & turn, SessionContext const & wm, StudentProfile const & profile)
{
    if (turn.session_id != wm.session_id)
        throw SessionMismatch("turn for session " + turn.session_id + " routed to " + wm.session_id);
    (void)profile;

    MemoryDirectives d;
    auto observe = [&](ObservationKind kind) -> Observation & {
        Observation o;
        o.kind = kind;
        o.at = turn.at;
        o.session_id = turn.session_id;
        d.ltm_writes.push_back(std::move(o));
        return d.ltm_writes.back();
    };

    if (turn.graded) {
        GradedStep const & g = *turn.graded;
        if (!g.correct && g.error_tag && !g.error_tag->empty()) {
            Observation & o = observe(ObservationKind::misconception_signal);
            o.topic = g.topic.empty() ? std::nullopt : std::optional(g.topic);
            o.payload = *g.error_tag;
            o.detail = g.error_description;
        }
        if (g.correct && g.final_answer && !g.topic.empty()) {
            Observation & o = observe(ObservationKind::mastery_evidence);
            o.topic = g.topic;
            o.score = 1.0;
        }
    }
    for (LearningStyle s : stated_preferences(turn.student_text))
        observe(ObservationKind::preference_signal).payload = to_string(s);
    if (auto goal = stated_goal(turn.student_text))
        observe(ObservationKind::goal_stated).payload = *goal;

    std::string summary = turn.summary.empty() ? summarize_turn(turn.student_text, turn.tutor_text) : turn.summary;
    d.wm_updates.push_back({PatchKind::append_turn, std::move(summary)});
    if (turn.graded && !turn.graded->topic.empty()) {
        if (wm.current_topic != turn.graded->topic)
            d.wm_updates.push_back({PatchKind::set_topic, turn.graded->topic});
        d.context_reads.push_back({turn.graded->topic});
    }
    return d;
}

void apply_directives(SessionContext & wm, MemoryDirectives const & directives)
{
    if (wm.closed)
        throw PreconditionError("session " + wm.session_id + " is closed");
    for (auto const & p : directives.wm_updates) {
        switch (p.kind) {
        case PatchKind::append_turn:
            wm.recent_turns.push_back(p.value);
            while (wm.recent_turns.size() > recent_turn_window)
                wm.recent_turns.pop_front();
            break;
        case PatchKind::set_topic: wm.current_topic = p.value; break;
        case PatchKind::add_fact: wm.scratch_facts.push_back(p.value); break;
        }
    }
    for (auto const & o : directives.ltm_writes) {
        validate(o);
        wm.pending.push_back(o);
    }
}

StudentProfile apply_observation(StudentProfile profile, Observation const & obs)
{
    validate(obs);
    switch (obs.kind) {
    case ObservationKind::mastery_evidence: {
        double const m = profile.mastery_of(*obs.topic);
        double const next = (1.0 - mastery_alpha) * m + mastery_alpha * *obs.score;
        profile.mastery[*obs.topic] = std::clamp(next, 0.0, 1.0);
        break;
    }
    case ObservationKind::misconception_signal:
        if (auto * r = find_record(profile, obs.payload)) {
            ++r->evidence_count;
            r->last_seen = std::max(r->last_seen, obs.at);
            r->last_session = obs.session_id;
            if (r->description.empty())
                r->description = obs.detail;
        } else {
            profile.misconceptions.push_back({obs.payload, obs.detail, 1, obs.at, obs.session_id});
        }
        break;
    case ObservationKind::preference_signal: profile.learning_style.insert(learning_style_from_string(obs.payload)); break;
    case ObservationKind::goal_stated: {
        std::string goal = text::trim(obs.payload);
        if (std::find(profile.goals.begin(), profile.goals.end(), goal) == profile.goals.end())
            profile.goals.push_back(std::move(goal));
        break;
    }
    }
    profile.updated_at = std::max(profile.updated_at, obs.at);
    return profile;
}

void set_problem(SessionContext & wm, std::string exercise_id, std::string canonical_answer)
{
    if (wm.problem_state && wm.problem_state->exercise_id == exercise_id)
        return;
    wm.problem_state = ProblemState{std::move(exercise_id), std::move(canonical_answer), 0, 0};
}

void raise_hint(SessionContext & wm, int level)
{
    if (!wm.problem_state)
        throw PreconditionError("no active problem");
    level = std::clamp(level, 0, max_hint_level);
    wm.problem_state->hint_level = std::max(wm.problem_state->hint_level, level);
}

void record_attempt(SessionContext & wm)
{
    if (!wm.problem_state)
        throw PreconditionError("no active problem");
    ++wm.problem_state->attempts;
}

PersonalizationContext retrieve_context(StudentProfile const & profile, SessionContext const & wm,
                                        std::string const & topic)
{
    PersonalizationContext ctx;
    ctx.mastery_level = profile.mastery_of(topic);
    // Pending signals already count toward evidence, and mark a tag as seen
    // this session.
    std::vector<MisconceptionRecord> merged = profile.misconceptions;
    std::set<std::string> seen_now;
    for (auto const & r : merged)
        if (!r.last_session.empty() && r.last_session == wm.session_id)
            seen_now.insert(r.tag);
    for (auto const & o : wm.pending) {
        if (o.kind != ObservationKind::misconception_signal)
            continue;
        seen_now.insert(o.payload);
        auto it = std::find_if(merged.begin(), merged.end(), [&](auto const & r) { return r.tag == o.payload; });
        if (it == merged.end())
            merged.push_back({o.payload, o.detail, 1, o.at, o.session_id});
        else {
            ++it->evidence_count;
            it->last_seen = std::max(it->last_seen, o.at);
            it->last_session = o.session_id;
        }
    }
    for (auto const & r : merged)
        if (r.evidence_count >= 2 || seen_now.count(r.tag))
            ctx.active_misconceptions.push_back(r);
    std::sort(ctx.active_misconceptions.begin(), ctx.active_misconceptions.end(), [](auto const & a, auto const & b) {
        if (a.evidence_count != b.evidence_count)
            return a.evidence_count > b.evidence_count;
        return a.tag < b.tag;
    });

    std::set<LearningStyle> styles = profile.learning_style;
    for (auto const & o : wm.pending)
        if (o.kind == ObservationKind::preference_signal)
            styles.insert(learning_style_from_string(o.payload));
    for (LearningStyle s : styles) {
        switch (s) {
        case LearningStyle::visual:
            ctx.style_hints.push_back("The student prefers visual explanations; offer a function plot when it helps.");
            break;
        case LearningStyle::verbal: ctx.style_hints.push_back("Explain each step in plain words."); break;
        case LearningStyle::example_driven:
            ctx.style_hints.push_back("Lead with a short worked example of a similar problem.");
            break;
        case LearningStyle::formal:
            ctx.style_hints.push_back("State definitions precisely and justify each step.");
            break;
        }
    }

    ctx.open_goals = profile.goals;
    for (auto const & o : wm.pending)
        if (o.kind == ObservationKind::goal_stated) {
            std::string g = text::trim(o.payload);
            if (std::find(ctx.open_goals.begin(), ctx.open_goals.end(), g) == ctx.open_goals.end())
                ctx.open_goals.push_back(std::move(g));
        }
    return ctx;
}

StudentProfile end_session(SessionContext const & wm, StudentProfile profile, Millis now)
{
    if (!wm.closed)
        throw SessionStillActive("session " + wm.session_id + " is still active");
    if (wm.student_id != profile.student_id)
        throw SessionMismatch("session " + wm.session_id + " belongs to " + wm.student_id);
    for (auto const & o : wm.pending)
        profile = apply_observation(std::move(profile), o);
    profile.history.push_back({wm.session_id, session_paragraph(wm), now});
    if (profile.history.size() > history_limit)
        profile.history.erase(profile.history.begin(),
                              profile.history.begin() + static_cast<long>(profile.history.size() - history_limit));
    return profile;
}

json to_json(StudentProfile const & p)
{
    json misconceptions = json::array();
    for (auto const & r : p.misconceptions)
        misconceptions.push_back({{"tag", r.tag},
                                  {"description", r.description},
                                  {"evidence_count", r.evidence_count},
                                  {"last_seen", r.last_seen},
                                  {"last_session", r.last_session}});
    json styles = json::array();
    for (auto s : p.learning_style)
        styles.push_back(to_string(s));
    json history = json::array();
    for (auto const & h : p.history)
        history.push_back({{"session_id", h.session_id}, {"summary", h.summary}, {"ended_at", h.ended_at}});
    return {{"schema_version", 1},
            {"student_id", p.student_id},
            {"mastery", p.mastery},
            {"misconceptions", misconceptions},
            {"learning_style", styles},
            {"goals", p.goals},
            {"history", history},
            {"created_at", p.created_at},
            {"updated_at", p.updated_at}};
}

StudentProfile profile_from_json(json const & j)
{
    if (j.value("schema_version", 0) != 1)
        throw Error("unsupported profile schema_version");
    StudentProfile p;
    try {
        p.student_id = j.at("student_id").get<std::string>();
        for (auto const & [topic, level] : j.at("mastery").items()) {
            double const m = level.get<double>();
            if (!(m >= 0.0 && m <= 1.0))
                throw Error("mastery for " + topic + " outside [0,1]");
            p.mastery[topic] = m;
        }
        std::set<std::string> tags;
        for (auto const & r : j.at("misconceptions")) {
            MisconceptionRecord rec{r.at("tag").get<std::string>(), r.value("description", ""),
                                    r.at("evidence_count").get<int>(), r.value("last_seen", Millis{0}),
                                    r.value("last_session", "")};
            if (rec.evidence_count < 1 || !tags.insert(rec.tag).second)
                throw Error("invalid misconception record " + rec.tag);
            p.misconceptions.push_back(std::move(rec));
        }
        for (auto const & s : j.at("learning_style"))
            p.learning_style.insert(learning_style_from_string(s.get<std::string>()));
        p.goals = j.at("goals").get<std::vector<std::string>>();
        for (auto const & h : j.at("history"))
            p.history.push_back(
                {h.at("session_id").get<std::string>(), h.at("summary").get<std::string>(), h.value("ended_at", Millis{0})});
        p.created_at = j.value("created_at", Millis{0});
        p.updated_at = j.value("updated_at", Millis{0});
    } catch (json::exception const & e) {
        throw Error(std::string("malformed profile document: ") + e.what());
    }
    return p;
}

json to_json(Observation const & o)
{
    json j{{"kind", to_string(o.kind)}, {"payload", o.payload}, {"at", o.at}, {"session_id", o.session_id}};
    if (o.topic)
        j["topic"] = *o.topic;
    if (o.score)
        j["score"] = *o.score;
    if (!o.detail.empty())
        j["detail"] = o.detail;
    return j;
}

Observation observation_from_json(json const & j)
{
    Observation o;
    o.kind = kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("topic"))
        o.topic = j.at("topic").get<std::string>();
    if (j.contains("score"))
        o.score = j.at("score").get<double>();
    o.payload = j.value("payload", "");
    o.detail = j.value("detail", "");
    o.at = j.value("at", Millis{0});
    o.session_id = j.value("session_id", "");
    return o;
}

json to_json(SessionContext const & wm)
{
    json j{{"session_id", wm.session_id},
           {"student_id", wm.student_id},
           {"recent_turns", std::vector<std::string>(wm.recent_turns.begin(), wm.recent_turns.end())},
           {"scratch_facts", wm.scratch_facts},
           {"closed", wm.closed}};
    j["current_topic"] = wm.current_topic ? json(*wm.current_topic) : json(nullptr);
    if (wm.problem_state)
        j["problem_state"] = {{"exercise_id", wm.problem_state->exercise_id},
                              {"canonical_answer", wm.problem_state->canonical_answer},
                              {"attempts", wm.problem_state->attempts},
                              {"hint_level", wm.problem_state->hint_level}};
    else
        j["problem_state"] = nullptr;
    json pending = json::array();
    for (auto const & o : wm.pending)
        pending.push_back(to_json(o));
    j["pending"] = pending;
    return j;
}

SessionContext session_from_json(json const & j)
{
    SessionContext wm;
    wm.session_id = j.at("session_id").get<std::string>();
    wm.student_id = j.at("student_id").get<std::string>();
    if (j.contains("current_topic") && !j["current_topic"].is_null())
        wm.current_topic = j["current_topic"].get<std::string>();
    if (j.contains("problem_state") && !j["problem_state"].is_null()) {
        auto const & ps = j["problem_state"];
        wm.problem_state = ProblemState{ps.at("exercise_id").get<std::string>(),
                                        ps.at("canonical_answer").get<std::string>(), ps.value("attempts", 0),
                                        ps.value("hint_level", 0)};
    }
    for (auto const & t : j.value("recent_turns", json::array()))
        wm.recent_turns.push_back(t.get<std::string>());
    wm.scratch_facts = j.value("scratch_facts", std::vector<std::string>{});
    for (auto const & o : j.value("pending", json::array()))
        wm.pending.push_back(observation_from_json(o));
    wm.closed = j.value("closed", false);
    return wm;
}

json to_json(MemoryDirectives const & d)
{
    json writes = json::array();
    for (auto const & o : d.ltm_writes)
        writes.push_back(to_json(o));
    json updates = json::array();
    for (auto const & p : d.wm_updates)
        updates.push_back({{"kind", to_string(p.kind)}, {"value", p.value}});
    json reads = json::array();
    for (auto const & q : d.context_reads)
        reads.push_back({{"topic", q.topic}});
    return {{"ltm_writes", writes}, {"wm_updates", updates}, {"context_reads", reads}};
}

} // namespace mtutor::memory
