//
// Copyright 2026 The dejavu-audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DEJAVU_DEJAVU_HPP_
#define DEJAVU_DEJAVU_HPP_

#include "dejavu/audit.hpp"
#include "dejavu/crop_geometry.hpp"
#include "dejavu/embedding_store.hpp"
#include "dejavu/error.hpp"
#include "dejavu/extractor.hpp"
#include "dejavu/knn.hpp"
#include "dejavu/lab_runner.hpp"
#include "dejavu/linear_probe.hpp"
#include "dejavu/metrics.hpp"
#include "dejavu/report.hpp"
#include "dejavu/split_protocol.hpp"
#include "dejavu/synthetic_lab.hpp"

#endif  // DEJAVU_DEJAVU_HPP_
