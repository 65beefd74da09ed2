#include "lcm/tensor.hpp"

#include <cmath>
#include <sstream>

#include "lcm/rng.hpp"

namespace lcm {

Shape::Shape(std::initializer_list<int> dims) : Shape(std::span<const int>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const int> dims) {
  if (dims.size() > kMaxRank) {
    throw ShapeError("tensor order " + std::to_string(dims.size()) + " exceeds 4");
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] < 1) throw ShapeError("tensor extents must be >= 1, got " + std::to_string(dims[i]));
    dims_[i] = dims[i];
  }
  rank_ = dims.size();
}

std::size_t Shape::numel() const {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[i]);
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) os << (i ? "x" : "") << dims_[i];
  os << ']';
  return os.str();
}

void require_rank4(const Shape& s, const char* what) {
  if (s.rank() != 4) throw ShapeError(std::string(what) + ": expected NCHW tensor, got " + s.str());
}

template <typename T>
void ParamBlock<T>::sgd_step(T lr) {
  if (grad.shape() != value.shape()) return;
  auto v = value.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  project();
}

template <typename T>
void ParamBlock<T>::project() {
  if (!bound) return;
  const T b = *bound;
  for (auto& v : value.data()) v = std::clamp(v, -b, b);
}

template struct ParamBlock<float>;
template struct ParamBlock<double>;

std::uint64_t Rng::mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // rejection sampling avoids modulo bias
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  // Box-Muller; one draw per call keeps the stream position simple
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace lcm
