// SPDX-License-Identifier: Apache-2.0
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "retain/data.hpp"
#include "retain/errors.hpp"

namespace retain::data {

std::string sanitize_name(const std::string& name) {
  std::string out = name;
  for (auto& ch : out) {
    const auto c = static_cast<unsigned char>(ch);
    if (!(std::isalnum(c) || ch == '_' || ch == ' ')) ch = '_';
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<Group> groups) : groups_(std::move(groups)) {
  for (auto& g : groups_) {
    for (auto& c : g.codes) {
      c = sanitize_name(c);
      names_.push_back(c);
    }
  }
}

Vocabulary Vocabulary::synthetic(std::size_t diagnosis, std::size_t medication, std::size_t procedure) {
  auto make = [](const char* prefix, std::size_t n) {
    std::vector<std::string> codes;
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof(buf), "%s_%03zu", prefix, i);
      codes.emplace_back(buf);
    }
    return codes;
  };
  return Vocabulary({{"diagnosis", make("DX", diagnosis)},
                     {"medication", make("RX", medication)},
                     {"procedure", make("PX", procedure)}});
}

std::pair<std::size_t, std::size_t> Vocabulary::group_range(const std::string& group) const {
  std::size_t begin = 0;
  for (const auto& g : groups_) {
    if (g.name == group) return {begin, begin + g.codes.size()};
    begin += g.codes.size();
  }
  throw ArgumentError("vocabulary has no group '" + group + "'");
}

std::string Vocabulary::to_json() const {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& g : groups_) doc[g.name] = g.codes;
  return doc.dump(2) + "\n";
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("vocabulary: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("vocabulary: expected an object of group -> [names]");
  std::vector<Group> groups;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_array()) throw ParseError("vocabulary: group '" + it.key() + "' is not an array");
    Group g{it.key(), {}};
    for (const auto& name : it.value()) {
      if (!name.is_string()) throw ParseError("vocabulary: non-string code name in group '" + it.key() + "'");
      g.codes.push_back(name.get<std::string>());
    }
    groups.push_back(std::move(g));
  }
  return Vocabulary(std::move(groups));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json();
  if (!out) throw IoError("failed writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace retain::data
