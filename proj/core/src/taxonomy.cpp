#include "lidarnl/taxonomy.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "lidarnl/errors.hpp"

namespace lidarnl {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<bool> targets_of(const std::map<std::uint16_t, ClassId>& mapping,
                             std::size_t classes) {
  std::vector<bool> present(classes, false);
  for (const auto& [raw, unified] : mapping) {
    if (unified != kIgnore && unified < classes) present[unified] = true;
  }
  return present;
}

}  // namespace

bool is_thing_class(std::string_view name) {
  return std::find(kThingClassNames.begin(), kThingClassNames.end(), name) !=
         kThingClassNames.end();
}

std::vector<std::string> unified_class_names() {
  return {kUnifiedClassNames.begin(), kUnifiedClassNames.end()};
}

Taxonomy::Taxonomy(std::vector<std::string> names,
                   std::map<std::uint16_t, ClassId> mapping)
    : names_(std::move(names)), mapping_(std::move(mapping)) {
  present_ = targets_of(mapping_, names_.size());
  check();
}

Taxonomy::Taxonomy(std::vector<std::string> names,
                   std::map<std::uint16_t, ClassId> mapping,
                   std::vector<bool> present_mask)
    : names_(std::move(names)),
      mapping_(std::move(mapping)),
      present_(std::move(present_mask)) {
  check();
}

void Taxonomy::check() const {
  if (names_.empty() || names_.size() >= kIgnore) {
    throw ConfigError("taxonomy needs between 1 and 65534 classes");
  }
  if (present_.size() != names_.size()) {
    throw ConfigError("present mask length differs from class count");
  }
  for (const auto& [raw, unified] : mapping_) {
    if (unified != kIgnore && unified >= names_.size()) {
      throw ConfigError("raw id " + std::to_string(raw) +
                        " maps outside the class list");
    }
  }
}

Taxonomy Taxonomy::identity(std::vector<std::string> names) {
  std::map<std::uint16_t, ClassId> mapping;
  for (std::size_t i = 0; i < names.size(); ++i) {
    mapping.emplace(static_cast<std::uint16_t>(i), static_cast<ClassId>(i));
  }
  std::vector<bool> present(names.size(), true);
  return Taxonomy(std::move(names), std::move(mapping), std::move(present));
}

Taxonomy Taxonomy::parse(std::string_view text, std::vector<std::string> names) {
  std::map<std::uint16_t, ClassId> mapping;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    const auto sep = line.find_first_of(" \t");
    if (sep == std::string_view::npos) {
      throw ConfigError("taxonomy line " + std::to_string(line_no) +
                        ": expected `raw_id <tab> name`");
    }
    const std::string_view id_text = line.substr(0, sep);
    const std::string_view target = trim(line.substr(sep));
    unsigned raw = 0;
    const auto [ptr, ec] =
        std::from_chars(id_text.data(), id_text.data() + id_text.size(), raw);
    if (ec != std::errc{} || ptr != id_text.data() + id_text.size() ||
        raw >= 0xFFFFU) {
      throw ConfigError("taxonomy line " + std::to_string(line_no) +
                        ": bad raw id '" + std::string(id_text) + "'");
    }
    ClassId unified = kIgnore;
    if (target != "ignore") {
      const auto it = std::find(names.begin(), names.end(), target);
      if (it == names.end()) {
        throw ConfigError("taxonomy line " + std::to_string(line_no) +
                          ": unknown class '" + std::string(target) + "'");
      }
      unified = static_cast<ClassId>(it - names.begin());
    }
    if (!mapping.emplace(static_cast<std::uint16_t>(raw), unified).second) {
      throw ConfigError("taxonomy line " + std::to_string(line_no) +
                        ": duplicate raw id " + std::to_string(raw));
    }
  }
  return Taxonomy(std::move(names), std::move(mapping));
}

Taxonomy Taxonomy::load(const std::filesystem::path& path,
                        std::vector<std::string> names) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open taxonomy " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), std::move(names));
}

ClassId Taxonomy::map(std::uint16_t raw) const {
  const auto it = mapping_.find(raw);
  if (it == mapping_.end()) {
    throw UnknownClass("raw id " + std::to_string(raw) +
                       " is outside the taxonomy domain");
  }
  return it->second;
}

ClassId Taxonomy::id_of(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) {
    throw ConfigError("unknown class name '" + std::string(name) + "'");
  }
  return static_cast<ClassId>(it - names_.begin());
}

LabelArray map_taxonomy(std::span<const std::uint16_t> raw, const Taxonomy& tax) {
  LabelArray out;
  out.num_classes = tax.num_classes();
  out.labels.reserve(raw.size());
  for (std::uint16_t r : raw) out.labels.push_back(tax.map(r));
  return out;
}

}  // namespace lidarnl
