#include "magicvo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace magicvo {

GradCheckReport finite_difference_check(const std::function<Tensor()>& f,
                                        const std::vector<NamedTensor>& leaves,
                                        double step, std::size_t max_coords_per_tensor,
                                        std::uint64_t seed) {
  if (step <= 0) throw ContractError("finite_difference_check: step must be positive");
  for (const auto& leaf : leaves) {
    if (!leaf.tensor.is_leaf()) {
      throw ContractError("finite_difference_check: '" + leaf.name + "' is not a leaf");
    }
  }

  std::vector<std::vector<double>> analytic;
  for (auto leaf : leaves) {
    leaf.tensor.set_requires_grad(true);
    leaf.tensor.zero_grad();
  }
  f().backward();
  for (const auto& leaf : leaves) {
    const auto g = leaf.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(leaf.tensor.numel(), 0.0);
  }

  std::mt19937_64 rng(seed);
  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor x = leaves[li].tensor;
    std::vector<std::size_t> coords(x.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords_per_tensor > 0 && coords.size() > max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto values = x.mutable_data();
    for (std::size_t idx : coords) {
      const double original = values[idx];
      values[idx] = original + step;
      const double up = f().item();
      values[idx] = original - step;
      const double down = f().item();
      values[idx] = original;

      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[li][idx];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double d = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (d >= report.max_discrepancy) {
        report.max_discrepancy = d;
        std::ostringstream os;
        os << leaves[li].name << '[' << idx << "] analytic=" << a << " numeric=" << numeric;
        report.worst = os.str();
      }
    }
  }
  return report;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double step) {
  Tensor leaf = x.clone(true);
  return finite_difference_check([&] { return f(leaf); }, {{"x", leaf}}, step)
      .max_discrepancy;
}

}  // namespace magicvo
