#pragma once

// Validator for the JSON Schema subset the published API schemas use:
// type (string or list), properties, required, additionalProperties (bool),
// items, enum, const, minimum, maximum, minLength, minItems, $ref to
// "#/definitions/<name>" or "<file>.json#/definitions/<name>", and anyOf.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cardio/core.hpp"
#include "json.hpp"

namespace cardio::schema {

struct Violation {
    std::string path; ///< "$.samples[3].t"
    std::string message;
};

class SchemaSet;

/// Every violation found, depth-first; empty when valid. Cross-file
/// references resolve through `set`.
std::vector<Violation> validate(const nlohmann::json& instance, const nlohmann::json& schema,
                                const SchemaSet* set = nullptr);

/// Throws ValidationError whose fields are the violation paths.
void require_valid(const nlohmann::json& instance, const nlohmann::json& schema, std::string_view what,
                   const SchemaSet* set = nullptr);

/// Loads every *.json under a directory, keyed by file stem.
class SchemaSet {
public:
    SchemaSet() = default;
    explicit SchemaSet(const std::filesystem::path& dir);
    const nlohmann::json& get(const std::string& name) const;
    bool has(const std::string& name) const { return schemas_.count(name) > 0; }
    std::vector<Violation> validate(const nlohmann::json& instance, const std::string& name) const;
    std::vector<std::string> names() const;

private:
    std::map<std::string, nlohmann::json> schemas_;
};

} // namespace cardio::schema
