#include <gtest/gtest.h>

#include "cardio/schema.hpp"
#include "support.hpp"

using namespace cardio;
using namespace cardio::schema;
using nlohmann::json;

namespace {

std::vector<std::string> paths(const std::vector<Violation>& vs) {
    std::vector<std::string> out;
    for (const auto& v : vs) out.push_back(v.path);
    return out;
}

const json kPoint = json::parse(R"({
  "type": "object",
  "properties": {
    "t": {"type": "integer", "minimum": 0},
    "v": {"type": "number", "maximum": 300},
    "tag": {"enum": ["a", "b"]},
    "name": {"type": "string", "minLength": 2},
    "kind": {"const": "point"},
    "maybe": {"type": ["string", "null"]},
    "list": {"type": "array", "minItems": 1, "items": {"$ref": "#/definitions/small"}},
    "either": {"anyOf": [{"type": "boolean"}, {"type": "integer"}]}
  },
  "required": ["t", "v"],
  "additionalProperties": false,
  "definitions": {"small": {"type": "integer", "maximum": 9}}
})");

} // namespace

TEST(Validate, AcceptsConformingInstance) {
    const json ok = {{"t", 5}, {"v", 1.5}, {"tag", "a"}, {"name", "ab"}, {"kind", "point"},
                     {"maybe", nullptr}, {"list", {1, 2}}, {"either", true}};
    EXPECT_TRUE(validate(ok, kPoint).empty());
}

TEST(Validate, ReportsEveryViolationWithItsPath) {
    const json bad = {{"t", 1.5},        {"tag", "c"},  {"name", "x"},   {"kind", "line"},
                      {"maybe", 3},      {"list", {1, 20}}, {"either", "s"}, {"extra", 0}};
    const auto p = paths(validate(bad, kPoint));
    for (const char* want : {"$.t", "$.v", "$.tag", "$.name", "$.kind", "$.maybe", "$.list[1]", "$.either", "$.extra"})
        EXPECT_NE(std::find(p.begin(), p.end(), want), p.end()) << want;
}

TEST(Validate, IntegerIsANumberButNotViceVersa) {
    EXPECT_TRUE(validate(3, json{{"type", "number"}}).empty());
    EXPECT_FALSE(validate(3.5, json{{"type", "integer"}}).empty());
    EXPECT_TRUE(validate(-1, json{{"type", "integer"}}).empty());
    EXPECT_FALSE(validate(-1, json{{"type", "integer"}, {"minimum", 0}}).empty());
    EXPECT_FALSE(validate(json::array(), json{{"type", "array"}, {"minItems", 1}}).empty());
}

TEST(Validate, RequireValidNamesFields) {
    try {
        require_valid(json{{"v", 1}}, kPoint, "point");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.fields(), (std::vector<std::string>{"$.t"}));
    }
}

TEST(SchemaSet, LoadsShippedSchemasAndResolvesCrossFileRefs) {
    const SchemaSet set(testkit::share_dir() / "schemas");
    for (const char* name : {"health", "patients", "patient", "vitals", "risk", "conversations", "summary", "alerts",
                             "note", "note_request", "ingest_request", "ingest_receipt", "turn_request",
                             "turn_response", "error", "common"})
        EXPECT_TRUE(set.has(name)) << name;
    const json req = {{"patient_id", "P1"},
                      {"device_id", "d"},
                      {"metric", "heart_rate"},
                      {"samples", {{{"t", 1}, {"v", 70.0}}}}};
    EXPECT_TRUE(set.validate(req, "ingest_request").empty());
    json bad = req;
    bad["metric"] = "blood_sugar";
    EXPECT_EQ(paths(set.validate(bad, "ingest_request")), (std::vector<std::string>{"$.metric"}));
    EXPECT_THROW(set.get("nonexistent"), Error);
}
