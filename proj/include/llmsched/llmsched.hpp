// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "llmsched/analysis.hpp"
#include "llmsched/cost_model.hpp"
#include "llmsched/engine.hpp"
#include "llmsched/metrics.hpp"
#include "llmsched/sched.hpp"
#include "llmsched/workload.hpp"
