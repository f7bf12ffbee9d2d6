#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "latentce/aligned.hpp"

namespace latentce::nn {

std::string shape_string(const std::vector<int>& dims);
std::size_t element_count(const std::vector<int>& dims);

// Dense row-major tensor. Owns its storage; copies are deep.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<int> dims);
  BasicTensor(std::vector<int> dims, std::vector<T> data);

  const std::vector<int>& dims() const noexcept { return dims_; }
  int dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const AlignedVector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v);
  void zero() { fill(T{0}); }
  bool same_shape(const BasicTensor& other) const noexcept { return dims_ == other.dims_; }

  // Reinterprets the same elements under new dims of equal element count.
  BasicTensor reshaped(std::vector<int> dims) const&;
  BasicTensor reshaped(std::vector<int> dims) &&;

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(dims_, AlignedVector<U>(data_.begin(), data_.end()), typename BasicTensor<U>::Adopt{});
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  template <typename U>
  friend class BasicTensor;

  struct Adopt {};
  BasicTensor(std::vector<int> dims, AlignedVector<T> data, Adopt);

  std::vector<int> dims_;
  AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Throws ShapeError unless `t` has exactly `dims`.
template <typename T>
void require_dims(const BasicTensor<T>& t, const std::vector<int>& dims, const char* what);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace latentce::nn
