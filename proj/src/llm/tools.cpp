#include "mtutor/llm/tools.hpp"

#include "mtutor/common/error.hpp"

namespace mtutor::llm {

void ToolRegistry::add(ToolSpec spec)
{
    if (find(spec.name))
        throw PreconditionError("tool '" + spec.name + "' registered twice");
    specs_.push_back(std::move(spec));
}

ToolSpec const * ToolRegistry::find(std::string const & name) const
{
    for (auto const & s : specs_)
        if (s.name == name)
            return &s;
    return nullptr;
}

namespace {

bool type_matches(std::string const & type, nlohmann::json const & v)
{
    if (type == "string")
        return v.is_string();
    if (type == "integer")
        return v.is_number_integer();
    if (type == "number")
        return v.is_number();
    if (type == "boolean")
        return v.is_boolean();
    if (type == "array")
        return v.is_array();
    if (type == "object")
        return v.is_object();
    return true;
}

} // namespace

std::optional<std::string> ToolRegistry::check(ToolInvocation const & call) const
{
    ToolSpec const * spec = find(call.name);
    if (!spec)
        return "unknown tool '" + call.name + "'";
    if (!call.arguments.is_object())
        return "arguments must be an object";
    auto const & schema = spec->parameters;
    if (schema.contains("required"))
        for (auto const & r : schema.at("required"))
            if (!call.arguments.contains(r.get<std::string>()))
                return "missing required argument '" + r.get<std::string>() + "'";
    if (schema.contains("properties")) {
        auto const & props = schema.at("properties");
        for (auto const & [name, value] : call.arguments.items()) {
            if (!props.contains(name))
                return "unexpected argument '" + name + "'";
            auto const & p = props.at(name);
            if (p.contains("type") && !type_matches(p.at("type").get<std::string>(), value))
                return "argument '" + name + "' should be " + p.at("type").get<std::string>();
        }
    }
    return std::nullopt;
}

} // namespace mtutor::llm
