#include "latentce/tensor.hpp"

#include <algorithm>
#include <utility>

#include "latentce/error.hpp"

namespace latentce::nn {

std::string shape_string(const std::vector<int>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

std::size_t element_count(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_string(dims));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <typename T>
BasicTensor<T>::BasicTensor(std::vector<int> dims)
    : dims_(std::move(dims)), data_(element_count(dims_), T{0}) {}

template <typename T>
BasicTensor<T>::BasicTensor(std::vector<int> dims, std::vector<T> data)
    : BasicTensor(std::move(dims), AlignedVector<T>(data.begin(), data.end()), Adopt{}) {}

template <typename T>
BasicTensor<T>::BasicTensor(std::vector<int> dims, AlignedVector<T> data, Adopt)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (element_count(dims_) != data_.size()) {
    throw ShapeError("tensor dims " + shape_string(dims_) + " need " +
                     std::to_string(element_count(dims_)) + " elements, got " +
                     std::to_string(data_.size()));
  }
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(std::vector<int> dims) const& {
  return BasicTensor(std::move(dims), data_, Adopt{});
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(std::vector<int> dims) && {
  return BasicTensor(std::move(dims), std::move(data_), Adopt{});
}

template <typename T>
void require_dims(const BasicTensor<T>& t, const std::vector<int>& dims, const char* what) {
  if (t.dims() != dims) {
    throw ShapeError(std::string(what) + ": expected " + shape_string(dims) + ", got " +
                     shape_string(t.dims()));
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void require_dims(const BasicTensor<float>&, const std::vector<int>&, const char*);
template void require_dims(const BasicTensor<double>&, const std::vector<int>&, const char*);

}  // namespace latentce::nn
