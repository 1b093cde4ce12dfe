#pragma once

// Finite-difference checks of the training loss on small random models,
// runnable from the command line without the test suite.
//
// For each case the analytic gradient of the loss is compared with central
// differences of the loss value. With alpha = 0 this checks first-order
// backprop; the reason term contains dy/dx, so its parameter gradient is a
// second-order quantity and is compared against differences of a loss that
// is itself computed from first-order gradients.

#include <cstdint>
#include <string>
#include <vector>

namespace compat_reason {

struct SelfCheckReport {
  bool passed = true;
  double worst_first_order = 0.0;
  double worst_second_order = 0.0;
  std::vector<std::string> lines;
};

inline constexpr double kFirstOrderTolerance = 1e-5;
inline constexpr double kSecondOrderTolerance = 1e-4;

/// `cases` random models, seeds 1..cases.
SelfCheckReport run_selfcheck(std::size_t cases);

/// ||a - b|| / max(||a||, ||b||, floor).
double relative_gradient_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-3);

}  // namespace compat_reason
