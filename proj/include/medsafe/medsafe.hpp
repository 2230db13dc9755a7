// Copyright 2026 The medsafe Authors
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

// Umbrella header. remote.hpp pulls in cpp-httplib and is included
// separately by code that talks to live endpoints.

#include "medsafe/agents.hpp"
#include "medsafe/dataset.hpp"
#include "medsafe/digest.hpp"
#include "medsafe/domain.hpp"
#include "medsafe/engine.hpp"
#include "medsafe/errors.hpp"
#include "medsafe/metrics.hpp"
#include "medsafe/policy.hpp"
#include "medsafe/report.hpp"
#include "medsafe/rubric.hpp"
#include "medsafe/run_store.hpp"
#include "medsafe/scripted.hpp"
#include "medsafe/serialize.hpp"
#include "medsafe/simulator.hpp"
