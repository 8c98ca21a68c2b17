#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "magicvo/tensor.hpp"

namespace magicvo {

struct GradCheckReport {
  double max_discrepancy = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "<param>[<index>] analytic=.. numeric=.."
};

/// Compares backward() against central differences for a scalar function of
/// one tensor. Discrepancy per component is
/// |analytic - numeric| / max(1, |analytic|, |numeric|); the max is returned.
/// `f` must be deterministic.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double step = 1e-5);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Same check over several leaves of a closure. With max_coords_per_tensor > 0
/// only that many randomly chosen coordinates of each tensor are probed.
GradCheckReport finite_difference_check(const std::function<Tensor()>& f,
                                        const std::vector<NamedTensor>& leaves,
                                        double step = 1e-5,
                                        std::size_t max_coords_per_tensor = 0,
                                        std::uint64_t seed = 0);

}  // namespace magicvo
