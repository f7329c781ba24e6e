#pragma once

#include <stdexcept>
#include <string>

namespace coordconv {

// Scope of the post-forward finite checks (see ensure_finite in ops.cpp).
//   full      - every op output is scanned
//   loss_only - only loss values are scanned
//   off       - no scanning
enum class FiniteChecks { full, loss_only, off };

FiniteChecks finite_checks();
void set_finite_checks(FiniteChecks mode);

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

// Kernel thread cap. Initialized from COORDCONV_LAB_THREADS (falling back to
// the hardware count); feeds both OpenMP and Eigen.
int max_threads();
void set_max_threads(int n);

}  // namespace coordconv
