#pragma once

#include "cvr/common.hpp"
#include "cvr/script.hpp"
#include "cvr/action.hpp"
#include "cvr/simulator.hpp"
#include "cvr/state.hpp"
#include "cvr/tabular.hpp"
#include "cvr/policy.hpp"
#include "cvr/episode.hpp"
#include "cvr/reward.hpp"
#include "cvr/grpo.hpp"
#include "cvr/remote_policy.hpp"
#include "cvr/eval.hpp"
#include "cvr/io.hpp"
