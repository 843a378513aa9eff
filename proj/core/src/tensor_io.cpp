// core/src/tensor_io.cpp

// Copyright 2026  The Lip2Speech Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lip2speech/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "lip2speech/common.hpp"
#include "json.hpp"

namespace l2s::io {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

int64_t TensorEntry::NumElements() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::vector<double> TensorEntry::AsF64() const {
  if (dtype == "float64") return f64;
  std::vector<double> out(f32.begin(), f32.end());
  return out;
}

void TensorContainer::PutF64(const std::string& name,
                             std::vector<int64_t> shape,
                             std::vector<double> data) {
  Check(static_cast<int64_t>(data.size()) ==
            [&] { int64_t n = 1; for (int64_t d : shape) n *= d; return n; }(),
        "PutF64: shape does not match data size for " + name);
  if (!tensors_.count(name)) order_.push_back(name);
  TensorEntry e;
  e.shape = std::move(shape);
  e.dtype = "float64";
  e.f64 = std::move(data);
  tensors_[name] = std::move(e);
}

void TensorContainer::PutF32(const std::string& name,
                             std::vector<int64_t> shape,
                             std::vector<float> data) {
  Check(static_cast<int64_t>(data.size()) ==
            [&] { int64_t n = 1; for (int64_t d : shape) n *= d; return n; }(),
        "PutF32: shape does not match data size for " + name);
  if (!tensors_.count(name)) order_.push_back(name);
  TensorEntry e;
  e.shape = std::move(shape);
  e.dtype = "float32";
  e.f32 = std::move(data);
  tensors_[name] = std::move(e);
}

bool TensorContainer::Has(const std::string& name) const {
  return tensors_.count(name) > 0;
}

const TensorEntry& TensorContainer::Get(const std::string& name) const {
  auto it = tensors_.find(name);
  Require(it != tensors_.end(), "tensor not found in container: " + name);
  return it->second;
}

std::vector<std::string> TensorContainer::Names() const { return order_; }

void TensorContainer::Save(const std::string& path) const {
  json header;
  header["byte_order"] = "little";
  header["meta"] = json::parse(meta_json_);
  json tensors = json::array();
  int64_t offset = 0;
  for (const auto& name : order_) {
    const TensorEntry& e = tensors_.at(name);
    int64_t nbytes =
        e.NumElements() * (e.dtype == "float64" ? 8 : 4);
    tensors.push_back({{"name", name},
                       {"dtype", e.dtype},
                       {"shape", e.shape},
                       {"offset", offset},
                       {"nbytes", nbytes}});
    offset += nbytes;
  }
  header["tensors"] = std::move(tensors);
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  Require(out.good(), "cannot open for writing: " + path);
  out.write("L2ST", 4);
  uint32_t hlen = static_cast<uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& name : order_) {
    const TensorEntry& e = tensors_.at(name);
    if (e.dtype == "float64") {
      out.write(reinterpret_cast<const char*>(e.f64.data()),
                static_cast<std::streamsize>(e.f64.size() * 8));
    } else {
      out.write(reinterpret_cast<const char*>(e.f32.data()),
                static_cast<std::streamsize>(e.f32.size() * 4));
    }
  }
  out.flush();
  Require(out.good(), "write failed: " + path);
}

TensorContainer TensorContainer::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), "cannot open container: " + path);
  char magic[4];
  in.read(magic, 4);
  Require(in.good() && std::memcmp(magic, "L2ST", 4) == 0,
          "bad container magic: " + path);
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  Require(in.good(), "truncated container header: " + path);

  json header = json::parse(hs);
  Require(header.value("byte_order", "") == "little",
          "unsupported byte order in container: " + path);

  TensorContainer c;
  c.meta_json_ = header.at("meta").dump();
  for (const auto& t : header.at("tensors")) {
    TensorEntry e;
    std::string name = t.at("name").get<std::string>();
    e.dtype = t.at("dtype").get<std::string>();
    e.shape = t.at("shape").get<std::vector<int64_t>>();
    int64_t n = e.NumElements();
    if (e.dtype == "float64") {
      e.f64.resize(static_cast<size_t>(n));
      in.read(reinterpret_cast<char*>(e.f64.data()), n * 8);
    } else if (e.dtype == "float32") {
      e.f32.resize(static_cast<size_t>(n));
      in.read(reinterpret_cast<char*>(e.f32.data()), n * 4);
    } else {
      Require(false, "unsupported dtype '" + e.dtype + "' in " + path);
    }
    Require(in.good(), "truncated payload for tensor " + name);
    c.order_.push_back(name);
    c.tensors_[name] = std::move(e);
  }
  return c;
}

}  // namespace l2s::io
