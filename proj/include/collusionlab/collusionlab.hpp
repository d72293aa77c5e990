#pragma once

#include "collusionlab/core.hpp"
#include "collusionlab/market.hpp"
#include "collusionlab/rules.hpp"
#include "collusionlab/sellers.hpp"
#include "collusionlab/simulation.hpp"
#include "collusionlab/policy.hpp"
#include "collusionlab/env.hpp"
#include "collusionlab/a2c.hpp"
#include "collusionlab/baseline.hpp"
#include "collusionlab/stats.hpp"
#include "collusionlab/config.hpp"
#include "collusionlab/experiment.hpp"
