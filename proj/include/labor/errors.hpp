#pragma once

#include <stdexcept>
#include <string>

namespace labor {

// Base for every error thrown by this library. `kind()` gives a stable
// machine-readable tag used by the CLI to map errors onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define LABOR_DEFINE_ERROR(Name, tag)                          \
  class Name : public Error {                                  \
   public:                                                     \
    explicit Name(const std::string& m) : Error(tag, m) {}     \
  }

LABOR_DEFINE_ERROR(SchemaError, "schema");
LABOR_DEFINE_ERROR(DuplicateKeyError, "duplicate-key");
LABOR_DEFINE_ERROR(IncompleteAccountsError, "incomplete-accounts");
LABOR_DEFINE_ERROR(IdentityViolationError, "identity-violation");
LABOR_DEFINE_ERROR(FrequencyError, "frequency");
LABOR_DEFINE_ERROR(DomainError, "domain");
LABOR_DEFINE_ERROR(ExtrapolationError, "extrapolation");
LABOR_DEFINE_ERROR(MisuseError, "misuse");
LABOR_DEFINE_ERROR(RankError, "rank");
LABOR_DEFINE_ERROR(NumericalError, "numerical");
LABOR_DEFINE_ERROR(CertificationError, "certification");
LABOR_DEFINE_ERROR(OverlapError, "overlap");
LABOR_DEFINE_ERROR(NoDonorError, "no-donor");
LABOR_DEFINE_ERROR(CoverageError, "coverage");
LABOR_DEFINE_ERROR(LeakageError, "leakage");
LABOR_DEFINE_ERROR(FoldError, "fold");
LABOR_DEFINE_ERROR(ReconciliationCapacityError, "reconciliation-capacity");
LABOR_DEFINE_ERROR(IoError, "io");

#undef LABOR_DEFINE_ERROR

// Training divergence carries the last finite-loss epoch so callers can
// recover the checkpoint.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& m, int last_good_epoch)
      : Error("divergence", m), last_good_epoch_(last_good_epoch) {}
  int last_good_epoch() const { return last_good_epoch_; }

 private:
  int last_good_epoch_;
};

}  // namespace labor
