#include "semclip/tensor.hpp"

#include <cstring>
#include <stdexcept>

namespace semclip {

namespace {

std::int64_t checked_volume(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw std::invalid_argument("tensor rank must be 1..4");
  }
  std::int64_t n = 1;
  for (int e : shape) {
    if (e < 1) throw std::invalid_argument("tensor extents must be >= 1");
    n *= e;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(checked_volume(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (checked_volume(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw std::invalid_argument("tensor data length does not match shape volume");
  }
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  for (float& x : t.data_) x = value;
  return t;
}

int Tensor::extent(int axis) const {
  if (axis < 0 || axis >= rank()) throw std::invalid_argument("axis out of range");
  return shape_[static_cast<std::size_t>(axis)];
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

Tensor Tensor::rows(int begin, int end) const {
  if (rank() != 2 || begin < 0 || end > shape_[0] || begin >= end) {
    throw std::invalid_argument("invalid row slice");
  }
  Tensor out({end - begin, shape_[1]});
  std::memcpy(out.data(), data() + static_cast<std::size_t>(begin) * shape_[1],
              static_cast<std::size_t>(end - begin) * shape_[1] * sizeof(float));
  return out;
}

}  // namespace semclip
