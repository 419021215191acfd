// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vgreward/dataset.hpp"
#include "vgreward/errors.hpp"
#include "vgreward/evaluation.hpp"
#include "vgreward/geometry.hpp"
#include "vgreward/judge.hpp"
#include "vgreward/parser.hpp"
#include "vgreward/reward.hpp"
#include "vgreward/scoring.hpp"
#include "vgreward/service.hpp"
