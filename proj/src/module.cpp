#include "poselift/module.hpp"

namespace poselift {

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

void ParamSet::set_requires_grad(bool on) {
  for (auto& [name, t] : params) t.set_requires_grad(on);
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : params) t.zero_grad();
}

ad::Tensor uniform_param(ad::Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = dist(rng);
  return ad::Tensor(std::move(shape), std::move(v), true);
}

ad::Tensor constant_param(ad::Shape shape, double value) {
  return ad::Tensor::full(std::move(shape), value, true);
}

}  // namespace poselift
