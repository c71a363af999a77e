#include "reuse/schema.hpp"

#include <cmath>

#include "reuse/error.hpp"

namespace reuse {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && std::floor(v.get<double>()) == v.get<double>();
  }
  throw Error(ErrorCode::ConfigInvalid, "schema uses unknown type '" + type + "'");
}

class Validator {
 public:
  explicit Validator(const json& root) : root_(root) {}

  void check(const json& s, const json& v, const std::string& path) {
    if (s.contains("$ref")) {
      const auto ref = s["$ref"].get<std::string>();
      if (ref.rfind("#/", 0) != 0) throw Error(ErrorCode::ConfigInvalid, "only local schema refs are supported");
      check(root_.at(json::json_pointer(ref.substr(1))), v, path);
      return;
    }
    if (s.contains("type")) {
      const auto& t = s["type"];
      bool ok = false;
      if (t.is_array()) {
        for (const auto& x : t) ok = ok || has_type(v, x.get<std::string>());
      } else {
        ok = has_type(v, t.get<std::string>());
      }
      if (!ok) {
        fail(path, "expected type " + t.dump());
        return;
      }
    }
    if (s.contains("enum")) {
      bool found = false;
      for (const auto& e : s["enum"]) found = found || e == v;
      if (!found) fail(path, "value " + v.dump() + " not in " + s["enum"].dump());
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s["minimum"].get<double>()) fail(path, "must be >= " + s["minimum"].dump());
      if (s.contains("maximum") && x > s["maximum"].get<double>()) fail(path, "must be <= " + s["maximum"].dump());
      if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>()) {
        fail(path, "must be > " + s["exclusiveMinimum"].dump());
      }
      if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>()) {
        fail(path, "must be < " + s["exclusiveMaximum"].dump());
      }
    }
    if (v.is_object()) {
      if (s.contains("required")) {
        for (const auto& r : s["required"]) {
          if (!v.contains(r.get<std::string>())) fail(path + "/" + r.get<std::string>(), "is required");
        }
      }
      const json props = s.value("properties", json::object());
      const bool closed = s.contains("additionalProperties") && s["additionalProperties"].is_boolean() &&
                          !s["additionalProperties"].get<bool>();
      for (auto it = v.begin(); it != v.end(); ++it) {
        const std::string sub = path + "/" + it.key();
        if (props.contains(it.key())) {
          check(props[it.key()], it.value(), sub);
        } else if (closed) {
          fail(sub, "unknown property");
        }
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
        fail(path, "needs at least " + s["minItems"].dump() + " items");
      }
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) {
        fail(path, "allows at most " + s["maxItems"].dump() + " items");
      }
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check(s["items"], v[i], path + "/" + std::to_string(i));
      }
    }
  }

  std::vector<std::string> errors;

 private:
  void fail(const std::string& path, const std::string& msg) { errors.push_back((path.empty() ? "/" : path) + ": " + msg); }
  const json& root_;
};

}  // namespace

std::vector<std::string> schema_errors(const nlohmann::json& schema, const nlohmann::json& instance) {
  Validator v(schema);
  v.check(schema, instance, "");
  return v.errors;
}

}  // namespace reuse
