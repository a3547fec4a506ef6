/*
 * Copyright 2026 The oodx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "oodx/autodiff.hpp"
#include "oodx/checkpoint.hpp"
#include "oodx/concepts.hpp"
#include "oodx/config.hpp"
#include "oodx/detectors.hpp"
#include "oodx/errors.hpp"
#include "oodx/explain.hpp"
#include "oodx/learn.hpp"
#include "oodx/metrics.hpp"
#include "oodx/model.hpp"
#include "oodx/pipeline.hpp"
#include "oodx/report.hpp"
#include "oodx/tensor.hpp"
#include "oodx/tensorio.hpp"
