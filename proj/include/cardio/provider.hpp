#pragma once

#include <string>

#include "json.hpp"

namespace cardio {

/// What a text backend is asked to write. `kind` selects the template
/// ("greeting", "recall", "summary", ...); `context` carries the structured
/// data the text must be faithful to.
struct TextRequest {
    std::string kind;
    nlohmann::json context;
};

/// Pluggable text generation. The defaults are deterministic templates; a
/// hosted-model adapter implements the same interface.
class TextProvider {
public:
    virtual ~TextProvider() = default;
    virtual std::string name() const = 0;
    /// May throw; callers fall back to their default template.
    virtual std::string generate(const TextRequest& request) = 0;
};

} // namespace cardio
