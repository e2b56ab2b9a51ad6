#pragma once

// Run configuration shared by the command-line tool: every section starts
// from defaults and user JSON may only override keys that exist.

#include <json.hpp>

#include <filesystem>
#include <string>

#include "rrto/dataset.hpp"
#include "rrto/error.hpp"
#include "rrto/io.hpp"
#include "rrto/latentmap.hpp"
#include "rrto/rrae.hpp"

namespace rrto::config {

using json = nlohmann::json;

namespace detail {

inline const char* type_name(const json& j) {
  if (j.is_number()) return "number";
  return j.type_name();
}

inline bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

}  // namespace detail

/// Overlays `user` on `defaults`. Unknown keys and type changes are errors;
/// arrays are replaced whole.
inline json merge_strict(const json& defaults, const json& user, const std::string& path = "") {
  if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  json out = defaults;
  for (const auto& [key, value] : user.items()) {
    const std::string at = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw ConfigError(at + ": unknown key");
    const json& d = defaults.at(key);
    if (d.is_object()) {
      out[key] = merge_strict(d, value, at);
    } else if (!detail::same_kind(d, value)) {
      throw ConfigError(at + ": expected " + detail::type_name(d) + ", got " + detail::type_name(value));
    } else {
      out[key] = value;
    }
  }
  return out;
}

struct RunConfig {
  dataset::DoePlan plan;
  topopt::SimpConfig simp;
  rrae::RraeConfig geometry = rrae::RraeConfig::defaults(rrae::Kind::geometry);
  rrae::RraeConfig sol1d = rrae::RraeConfig::defaults(rrae::Kind::sol1d);
  rrae::RraeConfig sol2d = rrae::RraeConfig::defaults(rrae::Kind::sol2d);
  latentmap::MapTrainConfig map;

  const rrae::RraeConfig& rrae(rrae::Kind k) const {
    return k == rrae::Kind::geometry ? geometry : k == rrae::Kind::sol1d ? sol1d : sol2d;
  }
};

inline json to_json(const RunConfig& c) {
  json r = json::object();
  for (const auto* m : {&c.geometry, &c.sol1d, &c.sol2d}) {
    json j = *m;
    j.erase("kind");
    r[rrae::kind_name(m->kind)] = j;
  }
  return {{"plan", c.plan}, {"simp", c.simp}, {"rrae", r}, {"map", c.map}};
}

/// Parses a user config; sections and keys left out keep their defaults.
inline RunConfig parse(const json& user) {
  const json merged = merge_strict(to_json(RunConfig{}), user);
  RunConfig c;
  try {
    c.plan = merged.at("plan").get<dataset::DoePlan>();
    c.simp = merged.at("simp").get<topopt::SimpConfig>();
    for (auto* m : {&c.geometry, &c.sol1d, &c.sol2d}) {
      json j = merged.at("rrae").at(rrae::kind_name(m->kind));
      j["kind"] = rrae::kind_name(m->kind);
      *m = j.get<rrae::RraeConfig>();
    }
    c.map = merged.at("map").get<latentmap::MapTrainConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.plan.validate();
  c.simp.validate();
  c.map.validate();
  return c;
}

inline RunConfig load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse(j);
}

inline std::string hash(const json& j) { return io::hex64(io::fnv1a(j.dump())); }

}  // namespace rrto::config
