// lip2speech/tensor_io.hpp
//
// Single-file tensor container used for every binary artifact in the project
// (checkpoints, cached mels, synthetic video clips). Layout:
//
//   bytes 0..3   magic "L2ST"
//   bytes 4..7   u32 little-endian header length H
//   bytes 8..8+H JSON header: {"byte_order":"little","meta":...,"tensors":[
//                  {"name","dtype","shape","offset","nbytes"}...]}
//   remainder    raw contiguous little-endian float32/float64 payloads
//
// Round-trips bit-exactly; the header is self-describing.

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

#ifndef LIP2SPEECH_TENSOR_IO_HPP_
#define LIP2SPEECH_TENSOR_IO_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace l2s::io {

struct TensorEntry {
  std::vector<int64_t> shape;
  std::string dtype;          // "float32" | "float64"
  std::vector<double> f64;    // filled when dtype == float64
  std::vector<float> f32;     // filled when dtype == float32

  int64_t NumElements() const;
  // Access as double regardless of storage dtype (f32 widened).
  std::vector<double> AsF64() const;
};

class TensorContainer {
 public:
  void PutF64(const std::string& name, std::vector<int64_t> shape,
              std::vector<double> data);
  void PutF32(const std::string& name, std::vector<int64_t> shape,
              std::vector<float> data);

  bool Has(const std::string& name) const;
  const TensorEntry& Get(const std::string& name) const;
  std::vector<std::string> Names() const;  // insertion order

  // Free-form JSON string carried in the header ("{}" when unset).
  void set_meta_json(std::string meta) { meta_json_ = std::move(meta); }
  const std::string& meta_json() const { return meta_json_; }

  void Save(const std::string& path) const;
  static TensorContainer Load(const std::string& path);

 private:
  std::vector<std::string> order_;
  std::map<std::string, TensorEntry> tensors_;
  std::string meta_json_ = "{}";
};

}  // namespace l2s::io

#endif  // LIP2SPEECH_TENSOR_IO_HPP_
