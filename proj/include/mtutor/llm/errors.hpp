#pragma once

#include "mtutor/common/error.hpp"

namespace mtutor::llm {

/// Network or HTTP-level failure. Retried by `complete`.
class TransportError : public Error
{
public:
    using Error::Error;
};

/// Well-delivered but malformed or inconsistent response. Never retried.
class ProtocolError : public Error
{
public:
    using Error::Error;
};

/// The scripted backend holds no entry for a request.
class ScriptMiss : public Error
{
public:
    explicit ScriptMiss(std::string digest)
        : Error("no scripted response for request " + digest)
        , digest_(std::move(digest))
    {
    }

    [[nodiscard]] std::string const & digest() const { return digest_; }

private:
    std::string digest_;
};

class DuplicateKey : public Error
{
public:
    explicit DuplicateKey(std::string const & key)
        : Error("duplicate script key " + key)
    {
    }
};

} // namespace mtutor::llm
