/* Copyright 2026 The mtdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef MTDET_TENSOR_HPP_
#define MTDET_TENSOR_HPP_

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace mtdet {

// Dense row-major float tensor. Shapes are small vectors ({C, H, W} for
// feature maps, {R, D} for per-region matrices).
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.f);

  size_t size() const { return data.size(); }
  int dim(int i) const { return shape[i]; }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  void Zero();
  bool SameShape(const Tensor& other) const { return shape == other.shape; }

  static size_t NumElements(const std::vector<int>& shape);
};

std::string ShapeString(const std::vector<int>& shape);

// A trainable tensor with its gradient and SGD momentum buffer.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;

  Param(std::string n, std::vector<int> shape);
};

// Owns parameters in registration order; that order fixes checkpoint layout
// and every reduction over parameters.
class ParamStore {
 public:
  Param* Add(const std::string& name, std::vector<int> shape);
  const std::vector<std::unique_ptr<Param>>& params() const { return params_; }
  Param* Find(const std::string& name) const;
  void ZeroGrad();
  size_t NumValues() const;

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

}  // namespace mtdet

#endif  // MTDET_TENSOR_HPP_
