#pragma once

#include <stdexcept>
#include <string>

namespace rwre {

// One exception type per contract failure so callers can catch precisely.
#define RWRE_DEFINE_ERROR(Name)                                    \
  struct Name : std::runtime_error {                               \
    explicit Name(const std::string& what) : std::runtime_error(what) {} \
  }

RWRE_DEFINE_ERROR(UnsupportedLaw);
RWRE_DEFINE_ERROR(InvalidRadius);
RWRE_DEFINE_ERROR(InsufficientData);
RWRE_DEFINE_ERROR(DomainError);
RWRE_DEFINE_ERROR(NotOnLayer);
RWRE_DEFINE_ERROR(InfeasibleConstants);
RWRE_DEFINE_ERROR(DegenerateLadder);
RWRE_DEFINE_ERROR(RegionTooLarge);
RWRE_DEFINE_ERROR(EmptyFront);
RWRE_DEFINE_ERROR(QuadratureFailure);
RWRE_DEFINE_ERROR(InfeasibleCoupling);
RWRE_DEFINE_ERROR(SingularCovariance);
RWRE_DEFINE_ERROR(HypothesisViolated);
RWRE_DEFINE_ERROR(ConditioningTooRare);
RWRE_DEFINE_ERROR(BudgetExhausted);
RWRE_DEFINE_ERROR(AuditTooLong);
RWRE_DEFINE_ERROR(IncompleteRun);
RWRE_DEFINE_ERROR(NotNestling);
RWRE_DEFINE_ERROR(AllZeroCounts);
RWRE_DEFINE_ERROR(SchemaError);
RWRE_DEFINE_ERROR(IoError);
RWRE_DEFINE_ERROR(EmptyLedger);

#undef RWRE_DEFINE_ERROR

}  // namespace rwre
