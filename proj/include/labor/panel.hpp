#pragma once

#include <map>
#include <utility>
#include <vector>

#include "labor/region.hpp"
#include "labor/series.hpp"
#include "labor/variable.hpp"

namespace labor {

// Keyed collection (region, variable) -> series; the carrier through every
// pipeline stage. Immutable-by-convention: operations return new panels.
class Panel {
 public:
  using Key = std::pair<RegionId, VariableId>;

  bool has(const RegionId& r, const VariableId& v) const;
  const Series& at(const RegionId& r, const VariableId& v) const;
  Series* find(const RegionId& r, const VariableId& v);
  const Series* find(const RegionId& r, const VariableId& v) const;

  // Throws DuplicateKeyError when the key already exists.
  void insert(const RegionId& r, const VariableId& v, Series s);
  // Insert-or-replace.
  void put(const RegionId& r, const VariableId& v, Series s);
  void erase(const RegionId& r, const VariableId& v);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // All (region, series) for one variable, in region order.
  std::vector<std::pair<RegionId, const Series*>> slice(const VariableId& v) const;
  std::vector<RegionId> regions() const;
  std::vector<VariableId> variables() const;
  std::vector<VariableId> variables_of(const RegionId& r) const;

  const std::map<Key, Series>& entries() const { return entries_; }

 private:
  std::map<Key, Series> entries_;
};

}  // namespace labor
