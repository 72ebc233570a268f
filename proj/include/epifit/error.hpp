#pragma once

#include <stdexcept>
#include <string>

namespace epifit {

/// Exception carrying a short machine-readable code alongside the message.
/// The CLI prints `error: <code>: <message>` and exits nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace epifit
