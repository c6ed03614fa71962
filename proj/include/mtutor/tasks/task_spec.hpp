#pragma once

#include "mtutor/memory/memory.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mtutor::tasks {

struct TaskSpec
{
    std::string topic;
    /// 1 (easiest) to 5.
    int difficulty = 2;
    std::optional<std::vector<std::string>> grounding;
    std::optional<memory::PersonalizationContext> personalization;

    bool operator==(TaskSpec const &) const = default;
};

} // namespace mtutor::tasks
