#include "cardio/schema.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace cardio::schema {

using nlohmann::json;

namespace {

bool has_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "integer") return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    if (type == "number") return v.is_number();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    return false;
}

class Checker {
public:
    Checker(const json& root, const SchemaSet* set) : root_(&root), set_(set) {}

    void check(const json& v, const json& s, const std::string& path) {
        if (s.is_boolean()) {
            if (!s.get<bool>()) add(path, "no value is allowed here");
            return;
        }
        if (s.contains("$ref")) {
            const auto ref = s.at("$ref").get<std::string>();
            const auto hash = ref.find('#');
            const std::string doc = hash == std::string::npos ? ref : ref.substr(0, hash);
            const std::string pointer = hash == std::string::npos ? "" : ref.substr(hash + 1);
            const json* root = root_;
            if (!doc.empty()) {
                if (!set_) throw ConfigError(fmt::format("schema reference '{}' needs a schema set", ref));
                root = &set_->get(std::filesystem::path(doc).stem().string());
            }
            const json* target = root;
            try {
                if (!pointer.empty()) target = &root->at(json::json_pointer(pointer));
            } catch (const json::exception&) {
                throw ConfigError(fmt::format("unresolvable schema reference '{}'", ref));
            }
            const json* saved = root_;
            root_ = root;
            check(v, *target, path);
            root_ = saved;
            return;
        }
        if (s.contains("anyOf")) {
            bool any = false;
            for (const auto& alt : s.at("anyOf")) {
                Checker sub(*root_, set_);
                sub.check(v, alt, path);
                if (sub.out.empty()) {
                    any = true;
                    break;
                }
            }
            if (!any) add(path, "does not match any allowed alternative");
        }
        if (s.contains("type")) {
            const auto& t = s.at("type");
            bool ok = false;
            if (t.is_string()) ok = has_type(v, t.get<std::string>());
            else
                for (const auto& alt : t) ok = ok || has_type(v, alt.get<std::string>());
            if (!ok) {
                add(path, fmt::format("expected type {}", t.dump()));
                return;
            }
        }
        if (s.contains("enum")) {
            bool found = false;
            for (const auto& e : s.at("enum")) found = found || e == v;
            if (!found) add(path, fmt::format("must be one of {}", s.at("enum").dump()));
        }
        if (s.contains("const") && s.at("const") != v) add(path, fmt::format("must equal {}", s.at("const").dump()));
        if (v.is_number()) {
            const double x = v.get<double>();
            if (s.contains("minimum") && x < s.at("minimum").get<double>())
                add(path, fmt::format("must be >= {}", s.at("minimum").dump()));
            if (s.contains("maximum") && x > s.at("maximum").get<double>())
                add(path, fmt::format("must be <= {}", s.at("maximum").dump()));
        }
        if (v.is_string() && s.contains("minLength") &&
            v.get<std::string>().size() < s.at("minLength").get<std::size_t>())
            add(path, fmt::format("must have at least {} characters", s.at("minLength").get<std::size_t>()));
        if (v.is_array()) {
            if (s.contains("minItems") && v.size() < s.at("minItems").get<std::size_t>())
                add(path, fmt::format("must have at least {} items", s.at("minItems").get<std::size_t>()));
            if (s.contains("items"))
                for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s.at("items"), fmt::format("{}[{}]", path, i));
        }
        if (v.is_object()) {
            if (s.contains("required"))
                for (const auto& r : s.at("required")) {
                    const auto key = r.get<std::string>();
                    if (!v.contains(key)) add(path + "." + key, "is required");
                }
            const json* props = s.contains("properties") ? &s.at("properties") : nullptr;
            for (const auto& [key, value] : v.items()) {
                if (props && props->contains(key)) check(value, props->at(key), path + "." + key);
                else if (s.contains("additionalProperties")) {
                    const auto& ap = s.at("additionalProperties");
                    if (ap.is_boolean() && !ap.get<bool>()) add(path + "." + key, "is not an allowed property");
                    else if (ap.is_object()) check(value, ap, path + "." + key);
                }
            }
        }
    }

    void add(const std::string& path, std::string msg) { out.push_back({path, std::move(msg)}); }

    std::vector<Violation> out;

private:
    const json* root_;
    const SchemaSet* set_;
};

} // namespace

std::vector<Violation> validate(const json& instance, const json& schema, const SchemaSet* set) {
    Checker c(schema, set);
    c.check(instance, schema, "$");
    return std::move(c.out);
}

void require_valid(const json& instance, const json& schema, std::string_view what, const SchemaSet* set) {
    const auto v = validate(instance, schema, set);
    if (v.empty()) return;
    std::vector<std::string> fields;
    for (const auto& x : v) fields.push_back(x.path);
    throw ValidationError(fmt::format("invalid {}: {} {}", what, v.front().path, v.front().message), fields);
}

SchemaSet::SchemaSet(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw ConfigError(fmt::format("schema directory '{}' not found", dir.string()));
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        std::ifstream in(entry.path());
        try {
            schemas_[entry.path().stem().string()] = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("schema '{}' is not JSON: {}", entry.path().string(), e.what()));
        }
    }
}

const json& SchemaSet::get(const std::string& name) const {
    auto it = schemas_.find(name);
    if (it == schemas_.end()) throw ConfigError(fmt::format("no schema named '{}'", name));
    return it->second;
}

std::vector<Violation> SchemaSet::validate(const json& instance, const std::string& name) const {
    return schema::validate(instance, get(name), this);
}

std::vector<std::string> SchemaSet::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : schemas_) out.push_back(k);
    return out;
}

} // namespace cardio::schema
