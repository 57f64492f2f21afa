// Copyright 2026 The mlpbank Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mlpbank/activation.hpp"
#include "mlpbank/bank_spec.hpp"
#include "mlpbank/bench.hpp"
#include "mlpbank/datagen.hpp"
#include "mlpbank/errors.hpp"
#include "mlpbank/fused_step.hpp"
#include "mlpbank/kernels.hpp"
#include "mlpbank/loss.hpp"
#include "mlpbank/model_bank.hpp"
#include "mlpbank/model_spec.hpp"
#include "mlpbank/parallel.hpp"
#include "mlpbank/report.hpp"
#include "mlpbank/sequential.hpp"
#include "mlpbank/tensor.hpp"
#include "mlpbank/trainer.hpp"
#include "mlpbank/verify.hpp"
