// core/src/tensor.cc

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

#include "pacrnn/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pacrnn/error.h"

namespace pacrnn {

Tensor::Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 2) {
    throw DimensionError("Tensor: rank must be 1 or 2, got rank " +
                         std::to_string(shape_.size()));
  }
  size_t n = 1;
  for (size_t d : shape_) {
    if (d == 0) throw DimensionError("Tensor: zero dimension in shape");
    n *= d;
  }
  cols_ = shape_.back();
  data_.assign(n, 0.0);
}

Tensor Tensor::vector(std::vector<double> values) {
  Tensor t({values.size()});
  std::copy(values.begin(), values.end(), t.data_.begin());
  return t;
}

Tensor Tensor::matrix(size_t rows, size_t cols, std::vector<double> values) {
  Tensor t({rows, cols});
  if (values.size() != rows * cols) {
    throw DimensionError("Tensor::matrix: " + std::to_string(values.size()) +
                         " values for shape " + t.shape_string());
  }
  std::copy(values.begin(), values.end(), t.data_.begin());
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is rank-1");
  return shape_[0];
}

size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is rank-1");
  return shape_[1];
}

size_t Tensor::length() const {
  if (rank() != 1) throw DimensionError("length(): tensor is rank-2");
  return shape_[0];
}

Tensor Tensor::row_vector(size_t r) const {
  Tensor out({cols()});
  std::copy(row(r), row(r) + cols_, out.data());
  return out;
}

void Tensor::fill(double value) {
  std::fill(data_.begin(), data_.end(), value);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << " x ";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: operands must be rank-2, got " +
                         a.shape_string() + " and " + b.shape_string());
  }
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree: " +
                         a.shape_string() + " vs " + b.shape_string());
  }
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  // ikj order keeps the inner loop contiguous in both b and c.
  for (size_t i = 0; i < m; ++i) {
    double* crow = c.row(i);
    const double* arow = a.row(i);
    for (size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b.row(p);
      for (size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.cols() != x.length()) {
    throw DimensionError("matvec: shapes disagree: " + w.shape_string() +
                         " vs " + x.shape_string());
  }
  const size_t m = w.rows(), k = w.cols();
  Tensor y({m});
  const double* xd = x.data();
  for (size_t i = 0; i < m; ++i) {
    const double* wrow = w.row(i);
    double acc = 0.0;
    for (size_t p = 0; p < k; ++p) acc += wrow[p] * xd[p];
    y[i] = acc;
  }
  return y;
}

Tensor matvec_transpose(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.rows() != x.length()) {
    throw DimensionError("matvec_transpose: shapes disagree: " +
                         w.shape_string() + " vs " + x.shape_string());
  }
  const size_t m = w.rows(), k = w.cols();
  Tensor y({k});
  double* yd = y.data();
  for (size_t i = 0; i < m; ++i) {
    const double* wrow = w.row(i);
    const double xi = x[i];
    for (size_t p = 0; p < k; ++p) yd[p] += xi * wrow[p];
  }
  return y;
}

void add_outer(Tensor* g, const Tensor& u, const Tensor& v) {
  if (g->rank() != 2 || g->rows() != u.length() || g->cols() != v.length()) {
    throw DimensionError("add_outer: shapes disagree: " + g->shape_string() +
                         " vs " + u.shape_string() + " outer " +
                         v.shape_string());
  }
  const size_t m = g->rows(), k = g->cols();
  const double* vd = v.data();
  for (size_t i = 0; i < m; ++i) {
    double* grow = g->row(i);
    const double ui = u[i];
    for (size_t p = 0; p < k; ++p) grow[p] += ui * vd[p];
  }
}

void add_inplace(Tensor* y, const Tensor& x) {
  if (!y->same_shape(x)) {
    throw DimensionError("add_inplace: shapes disagree: " + y->shape_string() +
                         " vs " + x.shape_string());
  }
  double* yd = y->data();
  const double* xd = x.data();
  for (size_t i = 0; i < y->size(); ++i) yd[i] += xd[i];
}

void axpy(double a, const Tensor& x, Tensor* y) {
  if (!y->same_shape(x)) {
    throw DimensionError("axpy: shapes disagree: " + y->shape_string() +
                         " vs " + x.shape_string());
  }
  double* yd = y->data();
  const double* xd = x.data();
  for (size_t i = 0; i < y->size(); ++i) yd[i] += a * xd[i];
}

void scale_inplace(Tensor* y, double a) {
  double* yd = y->data();
  for (size_t i = 0; i < y->size(); ++i) yd[i] *= a;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 || logits.length() == 0) {
    throw DimensionError("softmax: input must be a non-empty rank-1 tensor");
  }
  const size_t n = logits.length();
  Tensor out({n});
  double mx = logits[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (size_t i = 0; i < n; ++i) out[i] *= inv;
  return out;
}

Tensor concat(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw DimensionError("concat: empty part list");
  size_t total = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != 1) {
      throw DimensionError("concat: part is not rank-1: " + p->shape_string());
    }
    total += p->length();
  }
  Tensor out({total});
  size_t offset = 0;
  for (const Tensor* p : parts) {
    std::copy(p->data(), p->data() + p->length(), out.data() + offset);
    offset += p->length();
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(parts.size());
  for (const Tensor& p : parts) ptrs.push_back(&p);
  return concat(ptrs);
}

Tensor uniform_init(Rng* rng, std::vector<size_t> shape, double scale) {
  if (!(scale > 0.0)) {
    throw ParameterError("uniform_init: scale must be positive, got " +
                         std::to_string(scale));
  }
  Tensor t(std::move(shape));
  double* d = t.data();
  for (size_t i = 0; i < t.size(); ++i) {
    d[i] = rng->next_uniform(-scale, scale);
  }
  return t;
}

size_t argmax(const Tensor& v) {
  if (v.rank() != 1 || v.length() == 0) {
    throw DimensionError("argmax: input must be a non-empty rank-1 tensor");
  }
  size_t best = 0;
  for (size_t i = 1; i < v.length(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace pacrnn
