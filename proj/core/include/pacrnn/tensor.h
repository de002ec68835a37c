// core/include/pacrnn/tensor.h

// Copyright 2026  The pacrnn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef PACRNN_TENSOR_H_
#define PACRNN_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "pacrnn/rng.h"

namespace pacrnn {

// Dense rank-1 or rank-2 array of doubles, row-major. All model math in this
// project flows through this type; there is no broadcasting and no views.
class Tensor {
 public:
  Tensor() = default;

  // Zero-filled tensor of the given shape. Every dimension must be positive.
  explicit Tensor(std::vector<size_t> shape);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(size_t rows, size_t cols, std::vector<double> values);
  static Tensor zeros_like(const Tensor& other);

  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  const std::vector<size_t>& shape() const { return shape_; }

  // Rank-2 accessors; throw DimensionError on rank-1 tensors.
  size_t rows() const;
  size_t cols() const;

  // Rank-1 length; throws on rank-2.
  size_t length() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double at(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  const double* row(size_t r) const { return data_.data() + r * cols_; }
  double* row(size_t r) { return data_.data() + r * cols_; }

  // Copy of row r as a rank-1 tensor.
  Tensor row_vector(size_t r) const;

  void fill(double value);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // "[m x n]" or "[n]"; used in error messages.
  std::string shape_string() const;

 private:
  std::vector<size_t> shape_;
  size_t cols_ = 0;  // cached for rank-2 indexing; equals size() for rank-1
  std::vector<double> data_;
};

// c = a * b for rank-2 operands. Throws DimensionError naming both shapes
// when the inner dimensions disagree.
Tensor matmul(const Tensor& a, const Tensor& b);

// y = W * x with W rank-2 [m x k] and x rank-1 [k].
Tensor matvec(const Tensor& w, const Tensor& x);

// y = W^T * x with W rank-2 [m x k] and x rank-1 [m].
Tensor matvec_transpose(const Tensor& w, const Tensor& x);

// g += u * v^T with g rank-2 [m x k], u rank-1 [m], v rank-1 [k].
void add_outer(Tensor* g, const Tensor& u, const Tensor& v);

// y += x (same shape).
void add_inplace(Tensor* y, const Tensor& x);

// y += a * x (same shape).
void axpy(double a, const Tensor& x, Tensor* y);

// y *= a.
void scale_inplace(Tensor* y, double a);

// Numerically stable softmax of a rank-1 tensor (max subtraction).
// Throws DimensionError on empty input.
Tensor softmax(const Tensor& logits);

// Concatenation of rank-1 tensors in order. Throws DimensionError when the
// list is empty or any part is not rank-1.
Tensor concat(const std::vector<const Tensor*>& parts);
Tensor concat(const std::vector<Tensor>& parts);

// I.i.d. uniform values in [-scale, +scale]. scale must be positive.
Tensor uniform_init(Rng* rng, std::vector<size_t> shape, double scale);

// Index of the largest element of a rank-1 tensor (first on ties).
size_t argmax(const Tensor& v);

}  // namespace pacrnn

#endif  // PACRNN_TENSOR_H_
