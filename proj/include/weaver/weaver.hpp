// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "weaver/config.hpp"
#include "weaver/core.hpp"
#include "weaver/datapipe.hpp"
#include "weaver/harness.hpp"
#include "weaver/policy.hpp"
#include "weaver/protocol.hpp"
#include "weaver/reward.hpp"
#include "weaver/rollout.hpp"
#include "weaver/synthworld.hpp"
#include "weaver/toolkit.hpp"
#include "weaver/trajectory.hpp"
#include "weaver/types.hpp"
#include "weaver/util.hpp"
