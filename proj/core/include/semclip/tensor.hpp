#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

namespace semclip {

/// Dense row-major rank-1..4 float32 array; the universal numeric carrier.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> values);

  static Tensor full(std::vector<int> shape, float value);

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int extent(int axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& at(int i0) {
    assert(rank() == 1 && i0 >= 0 && i0 < shape_[0]);
    return data_[static_cast<std::size_t>(i0)];
  }
  float at(int i0) const { return const_cast<Tensor*>(this)->at(i0); }

  float& at(int i0, int i1) {
    assert(rank() == 2 && i0 >= 0 && i0 < shape_[0] && i1 >= 0 && i1 < shape_[1]);
    return data_[static_cast<std::size_t>(i0) * shape_[1] + i1];
  }
  float at(int i0, int i1) const { return const_cast<Tensor*>(this)->at(i0, i1); }

  float& at(int i0, int i1, int i2) {
    assert(rank() == 3);
    return data_[(static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2];
  }
  float at(int i0, int i1, int i2) const { return const_cast<Tensor*>(this)->at(i0, i1, i2); }

  // Pointer to row r of a rank-2 tensor.
  float* row(int r) {
    assert(rank() == 2 && r >= 0 && r < shape_[0]);
    return data_.data() + static_cast<std::size_t>(r) * shape_[1];
  }
  const float* row(int r) const { return const_cast<Tensor*>(this)->row(r); }

  // Rows [begin, end) of a rank-2 tensor as a new tensor.
  Tensor rows(int begin, int end) const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

}  // namespace semclip
