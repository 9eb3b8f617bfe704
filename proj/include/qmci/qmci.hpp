// Copyright 2026 The qmci-lab Authors
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

#pragma once

#include "qmci/discretisation.hpp"
#include "qmci/distributions.hpp"
#include "qmci/error_audit.hpp"
#include "qmci/io.hpp"
#include "qmci/mci.hpp"
#include "qmci/optimize.hpp"
#include "qmci/parallel.hpp"
#include "qmci/qae.hpp"
#include "qmci/quadrature.hpp"
#include "qmci/risk.hpp"
#include "qmci/rng.hpp"
