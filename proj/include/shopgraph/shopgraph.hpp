// Copyright 2026 The shopgraph Authors.
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

#ifndef SHOPGRAPH_SHOPGRAPH_HPP
#define SHOPGRAPH_SHOPGRAPH_HPP

#include "shopgraph/common.hpp"
#include "shopgraph/ingest.hpp"
#include "shopgraph/rfm.hpp"
#include "shopgraph/lasso.hpp"
#include "shopgraph/nmf.hpp"
#include "shopgraph/cluster.hpp"
#include "shopgraph/graph.hpp"
#include "shopgraph/pipeline.hpp"

#endif  // SHOPGRAPH_SHOPGRAPH_HPP
