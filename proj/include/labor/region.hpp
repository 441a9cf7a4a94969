#pragma once

#include <compare>
#include <optional>
#include <string>

namespace labor {

enum class RegionKind { national, department, city, cluster };

const char* to_string(RegionKind kind);
std::optional<RegionKind> region_kind_from_string(const std::string& text);

struct RegionId {
  std::string code;  // zero-padded department/city code, or a symbolic name
  RegionKind kind = RegionKind::department;

  auto operator<=>(const RegionId&) const = default;

  static RegionId national() { return {"CO", RegionKind::national}; }
  static RegionId department(std::string code) { return {std::move(code), RegionKind::department}; }
  static RegionId city(std::string code) { return {std::move(code), RegionKind::city}; }

  std::string str() const { return std::string(to_string(kind)) + ":" + code; }
};

}  // namespace labor
