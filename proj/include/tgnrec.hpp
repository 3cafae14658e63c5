/*
 * Copyright 2026 The tgnrec Authors.
 *
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

#include "tgnrec/binary_io.hpp"
#include "tgnrec/config.hpp"
#include "tgnrec/data_io.hpp"
#include "tgnrec/decoder.hpp"
#include "tgnrec/grad_check.hpp"
#include "tgnrec/graph_transformer.hpp"
#include "tgnrec/init.hpp"
#include "tgnrec/memory.hpp"
#include "tgnrec/metrics.hpp"
#include "tgnrec/model.hpp"
#include "tgnrec/optim.hpp"
#include "tgnrec/temporal_graph.hpp"
#include "tgnrec/tensor.hpp"
#include "tgnrec/train.hpp"
