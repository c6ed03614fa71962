#pragma once

#include "mtutor/llm/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mtutor::llm {

/// Named tool specifications. Argument validation covers the JSON-schema
/// subset the platform emits: an object with typed `properties` and a
/// `required` list.
class ToolRegistry
{
public:
    /// Throws PreconditionError on a duplicate name.
    void add(ToolSpec spec);

    [[nodiscard]] ToolSpec const * find(std::string const & name) const;
    [[nodiscard]] std::vector<ToolSpec> const & specs() const { return specs_; }

    /// Error description, or nullopt when the call is well-formed.
    [[nodiscard]] std::optional<std::string> check(ToolInvocation const & call) const;

private:
    std::vector<ToolSpec> specs_;
};

} // namespace mtutor::llm
