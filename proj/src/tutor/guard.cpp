#include "mtutor/tutor/guard.hpp"

#include "mtutor/math/answers.hpp"

#include <algorithm>

namespace mtutor::tutor {

GuardVerdict anti_telling_guard(std::string const & candidate, std::vector<math::Expr> const & ground_truth)
{
    GuardVerdict v;
    if (ground_truth.empty())
        return v;
    for (auto const & span : math::extract_answer_spans(candidate)) {
        for (auto const & truth : ground_truth) {
            if (!math::contains_equivalent({truth}, span.value))
                continue;
            v.matched.push_back({span.text, truth, span.value_begin, span.value_end});
            break;
        }
    }
    v.telling = !v.matched.empty();
    return v;
}

std::string redact(std::string const & candidate, GuardVerdict const & verdict)
{
    auto matches = verdict.matched;
    // Right to left so earlier offsets stay valid.
    std::sort(matches.begin(), matches.end(),
              [](GuardMatch const & a, GuardMatch const & b) { return a.value_begin > b.value_begin; });
    std::string out = candidate;
    std::size_t floor = out.size();
    for (auto const & m : matches) {
        if (m.value_end > floor || m.value_begin >= m.value_end)
            continue;
        out.replace(m.value_begin, m.value_end - m.value_begin, redaction_blank);
        floor = m.value_begin;
    }
    return out;
}

} // namespace mtutor::tutor
