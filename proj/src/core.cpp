#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "labor/month_key.hpp"
#include "labor/panel.hpp"
#include "labor/region.hpp"
#include "labor/series.hpp"
#include "labor/variable.hpp"

namespace labor {

MonthKey MonthKey::from_index(std::int64_t idx) {
  std::int64_t y = idx >= 0 ? idx / 12 : (idx - 11) / 12;
  int m = static_cast<int>(idx - y * 12) + 1;
  return MonthKey{static_cast<int>(y), m};
}

std::string MonthKey::str() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
  return buf;
}

std::optional<MonthKey> MonthKey::parse(const std::string& text) {
  auto parse_int = [](const char* b, const char* e, int& out) {
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
  };
  const char* b = text.data();
  const char* e = b + text.size();
  if (text.size() == 4) {
    int y;
    if (!parse_int(b, e, y)) return std::nullopt;
    return MonthKey::annual(y);
  }
  if (text.size() == 7 && text[4] == '-') {
    int y, m;
    if (!parse_int(b, b + 4, y) || !parse_int(b + 5, e, m)) return std::nullopt;
    MonthKey k{y, m};
    if (!k.valid()) return std::nullopt;
    return k;
  }
  return std::nullopt;
}

std::vector<MonthKey> month_range(MonthKey first, MonthKey last) {
  std::vector<MonthKey> out;
  if (last < first) return out;
  out.reserve(static_cast<std::size_t>(last.index() - first.index()) + 1);
  for (std::int64_t i = first.index(); i <= last.index(); ++i) out.push_back(MonthKey::from_index(i));
  return out;
}

const char* to_string(RegionKind kind) {
  switch (kind) {
    case RegionKind::national: return "national";
    case RegionKind::department: return "department";
    case RegionKind::city: return "city";
    case RegionKind::cluster: return "cluster";
  }
  return "department";
}

std::optional<RegionKind> region_kind_from_string(const std::string& text) {
  if (text == "national") return RegionKind::national;
  if (text == "department") return RegionKind::department;
  if (text == "city") return RegionKind::city;
  if (text == "cluster") return RegionKind::cluster;
  return std::nullopt;
}

bool is_level_count(const VariableId& v) {
  return v == var::employed || v == var::unemployed || v == var::inactive || v == var::pea ||
         v == var::pet || v == var::population;
}

bool is_rate(const VariableId& v) {
  if (v == var::informality_rate || v == var::employment_rate || v == var::unemployment_rate ||
      v == var::participation_rate || v == var::inactivity_rate)
    return true;
  return v.name.size() > 5 && v.name.rfind("_rate") == v.name.size() - 5;
}

const char* to_string(Frequency f) { return f == Frequency::monthly ? "monthly" : "annual"; }

void Series::set(MonthKey key, double value) {
  if (!key.valid()) throw DomainError("invalid month key " + key.str());
  if (!std::isfinite(value))
    throw DomainError("non-finite value rejected at " + key.str());
  if (frequency_ == Frequency::annual && key.month != 12)
    throw FrequencyError("annual series keys must use the month-12 sentinel, got " + key.str());
  points_[key] = value;
}

std::optional<double> Series::get(MonthKey key) const {
  auto it = points_.find(key);
  if (it == points_.end()) return std::nullopt;
  return it->second;
}

double Series::at(MonthKey key) const {
  auto it = points_.find(key);
  if (it == points_.end()) throw DomainError("series has no value at " + key.str());
  return it->second;
}

MonthKey Series::first_key() const {
  if (points_.empty()) throw DomainError("first_key() on empty series");
  return points_.begin()->first;
}

MonthKey Series::last_key() const {
  if (points_.empty()) throw DomainError("last_key() on empty series");
  return points_.rbegin()->first;
}

bool Series::covers(MonthKey first, MonthKey last) const {
  if (last < first) return true;
  if (frequency_ == Frequency::annual) {
    for (int y = first.year; y <= last.year; ++y)
      if (!has(MonthKey::annual(y))) return false;
    return true;
  }
  for (std::int64_t i = first.index(); i <= last.index(); ++i)
    if (!has(MonthKey::from_index(i))) return false;
  return true;
}

std::vector<MonthKey> Series::keys() const {
  std::vector<MonthKey> out;
  out.reserve(points_.size());
  for (const auto& [k, _] : points_) out.push_back(k);
  return out;
}

std::vector<double> Series::values() const {
  std::vector<double> out;
  out.reserve(points_.size());
  for (const auto& [_, v] : points_) out.push_back(v);
  return out;
}

std::vector<MonthKey> Series::gaps() const {
  std::vector<MonthKey> out;
  if (points_.size() < 2) return out;
  if (frequency_ == Frequency::annual) {
    for (int y = first_key().year; y <= last_key().year; ++y)
      if (!has(MonthKey::annual(y))) out.push_back(MonthKey::annual(y));
    return out;
  }
  for (std::int64_t i = first_key().index(); i <= last_key().index(); ++i) {
    MonthKey k = MonthKey::from_index(i);
    if (!has(k)) out.push_back(k);
  }
  return out;
}

Series Series::slice(MonthKey first, MonthKey last) const {
  Series out(frequency_);
  for (auto it = points_.lower_bound(first); it != points_.end() && it->first <= last; ++it)
    out.set(it->first, it->second);
  return out;
}

Series constant_monthly(MonthKey first, MonthKey last, double value) {
  Series s(Frequency::monthly);
  for (MonthKey k : month_range(first, last)) s.set(k, value);
  return s;
}

bool Panel::has(const RegionId& r, const VariableId& v) const {
  return entries_.count({r, v}) != 0;
}

const Series& Panel::at(const RegionId& r, const VariableId& v) const {
  auto it = entries_.find({r, v});
  if (it == entries_.end())
    throw DomainError("panel has no series for " + r.str() + "/" + v.name);
  return it->second;
}

Series* Panel::find(const RegionId& r, const VariableId& v) {
  auto it = entries_.find({r, v});
  return it == entries_.end() ? nullptr : &it->second;
}

const Series* Panel::find(const RegionId& r, const VariableId& v) const {
  auto it = entries_.find({r, v});
  return it == entries_.end() ? nullptr : &it->second;
}

void Panel::insert(const RegionId& r, const VariableId& v, Series s) {
  auto [it, inserted] = entries_.emplace(Key{r, v}, std::move(s));
  if (!inserted)
    throw DuplicateKeyError("duplicate panel entry " + r.str() + "/" + v.name);
}

void Panel::put(const RegionId& r, const VariableId& v, Series s) {
  entries_[Key{r, v}] = std::move(s);
}

void Panel::erase(const RegionId& r, const VariableId& v) { entries_.erase({r, v}); }

std::vector<std::pair<RegionId, const Series*>> Panel::slice(const VariableId& v) const {
  std::vector<std::pair<RegionId, const Series*>> out;
  for (const auto& [key, series] : entries_)
    if (key.second == v) out.emplace_back(key.first, &series);
  return out;
}

std::vector<RegionId> Panel::regions() const {
  std::vector<RegionId> out;
  for (const auto& [key, _] : entries_)
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<VariableId> Panel::variables() const {
  std::vector<VariableId> out;
  for (const auto& [key, _] : entries_) out.push_back(key.second);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<VariableId> Panel::variables_of(const RegionId& r) const {
  std::vector<VariableId> out;
  for (const auto& [key, _] : entries_)
    if (key.first == r) out.push_back(key.second);
  return out;
}

}  // namespace labor
