#pragma once

#include <compare>
#include <string>

namespace labor {

// Variable identifier. The core labor accounting set is closed; covariates
// (cpi, trm, ...) are open-ended, so this is a string wrapper with
// classification helpers rather than a closed enum.
struct VariableId {
  std::string name;

  VariableId() = default;
  explicit VariableId(std::string n) : name(std::move(n)) {}
  auto operator<=>(const VariableId&) const = default;
};

namespace var {
inline const VariableId employed{"employed"};
inline const VariableId unemployed{"unemployed"};
inline const VariableId inactive{"inactive"};
inline const VariableId pea{"pea"};
inline const VariableId pet{"pet"};
inline const VariableId population{"population"};
inline const VariableId informality_rate{"informality_rate"};
inline const VariableId employment_rate{"employment_rate"};
inline const VariableId unemployment_rate{"unemployment_rate"};
inline const VariableId participation_rate{"participation_rate"};
inline const VariableId inactivity_rate{"inactivity_rate"};
}  // namespace var

// Person-count variables: safe to sum across regions.
bool is_level_count(const VariableId& v);
// Rates: must never be aggregated directly.
bool is_rate(const VariableId& v);

}  // namespace labor
