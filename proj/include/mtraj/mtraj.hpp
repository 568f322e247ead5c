// Copyright 2026 The mtraj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MTRAJ__MTRAJ_HPP_
#define MTRAJ__MTRAJ_HPP_

#include "mtraj/common.hpp"
#include "mtraj/numerics.hpp"
#include "mtraj/params.hpp"
#include "mtraj/data.hpp"
#include "mtraj/metrics.hpp"
#include "mtraj/adapter.hpp"
#include "mtraj/contrastive.hpp"
#include "mtraj/losses.hpp"
#include "mtraj/model.hpp"
#include "mtraj/train.hpp"
#include "mtraj/eval.hpp"

#endif  // MTRAJ__MTRAJ_HPP_
