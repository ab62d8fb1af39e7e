#include "pivotcap/nn.hpp"

#include <cmath>

#include "pivotcap/ops.hpp"

namespace pivotcap {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw Error("Rng::below: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(a) ^ b) ^ c);
}

Tensor ParameterStore::add(const std::string& name, Tensor init) {
  if (name.empty()) throw Error("parameter name must not be empty");
  if (!index_.emplace(name, params_.size()).second) throw Error("duplicate parameter name \"" + name + "\"");
  init.node()->requires_grad = true;
  params_.push_back({name, init});
  return init;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter \"" + name + "\"");
  return params_[it->second].tensor;
}

std::size_t ParameterStore::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor xavier_uniform(Shape shape, Rng& rng) {
  if (shape.size() != 2) throw ShapeError("xavier_uniform: expected rank 2, got " + shape_str(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v));
}

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool zero_init, bool with_bias) {
  Linear l;
  l.weight = store.add(name + ".weight", zero_init ? Tensor::zeros({in, out}) : xavier_uniform({in, out}, rng));
  if (with_bias) l.bias = store.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.gamma = store.add(name + ".gamma", Tensor::full({dim}, 1.0));
  ln.beta = store.add(name + ".beta", Tensor::zeros({dim}));
  return ln;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

Tensor sinusoidal_positions(const std::vector<std::size_t>& positions, std::size_t dim) {
  std::vector<double> v(positions.size() * dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const double pos = static_cast<double>(positions[r]);
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      v[r * dim + i] = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return Tensor::from_data({positions.size(), dim}, std::move(v));
}

Tensor sinusoidal_positions(std::size_t count, std::size_t dim) {
  std::vector<std::size_t> positions(count);
  for (std::size_t i = 0; i < count; ++i) positions[i] = i;
  return sinusoidal_positions(positions, dim);
}

}  // namespace pivotcap
