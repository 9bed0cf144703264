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
#include "mtdet/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "mtdet/errors.hpp"

namespace mtdet {

size_t Tensor::NumElements(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) Fail(ErrorKind::kConfiguration, "negative tensor dimension");
    n *= static_cast<size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s, float fill) : shape(std::move(s)), data(NumElements(shape), fill) {}

void Tensor::Zero() { std::fill(data.begin(), data.end(), 0.f); }

std::string ShapeString(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ")";
  return os.str();
}

Param::Param(std::string n, std::vector<int> shape)
    : name(std::move(n)), value(shape), grad(shape), velocity(shape) {}

Param* ParamStore::Add(const std::string& name, std::vector<int> shape) {
  if (Find(name)) Fail(ErrorKind::kConfiguration, "duplicate parameter '" + name + "'");
  params_.push_back(std::make_unique<Param>(name, std::move(shape)));
  return params_.back().get();
}

Param* ParamStore::Find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

void ParamStore::ZeroGrad() {
  for (auto& p : params_) p->grad.Zero();
}

size_t ParamStore::NumValues() const {
  size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

}  // namespace mtdet
