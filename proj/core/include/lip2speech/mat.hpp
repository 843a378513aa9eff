// lip2speech/mat.hpp

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

#ifndef LIP2SPEECH_MAT_HPP_
#define LIP2SPEECH_MAT_HPP_

#include <complex>

#include <Eigen/Dense>

namespace l2s {

// All numeric kernels run in double; gradient checks against central
// differences need the head-room.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

}  // namespace l2s

#endif  // LIP2SPEECH_MAT_HPP_
