#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace mtutor::tutor {

/// The two system prompts compared by the evaluation: the Socratic tutor
/// prompt and a plain assistant prompt.
enum class PromptVariant { tutor, base };

std::string_view to_string(PromptVariant v);
std::optional<PromptVariant> prompt_variant_from_string(std::string_view s);

/// Template text from assets/prompts, embedded at build time. Variables:
///   {{problem}}          statement of the active problem, or "none yet"
///   {{attempt_note}}     how the student's last answer went
///   {{hint_level}}       0..3
///   {{hint_instruction}} what a reply at that level may contain
///   {{personalization}}  mastery, misconceptions, style, goals
///   {{tools}}            comma-separated tool names
std::string_view prompt_template(PromptVariant variant);

/// Replace {{name}} with vars[name]; unknown names become empty.
std::string render_template(std::string_view tmpl, std::map<std::string, std::string> const & vars);

} // namespace mtutor::tutor
