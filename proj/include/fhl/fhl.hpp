#pragma once

#include "fhl/common.hpp"
#include "fhl/config.hpp"
#include "fhl/convergence_lab.hpp"
#include "fhl/csv.hpp"
#include "fhl/effective_h.hpp"
#include "fhl/env_media.hpp"
#include "fhl/ergodic_averaging.hpp"
#include "fhl/grid.hpp"
#include "fhl/hj_evolution.hpp"
#include "fhl/metric_solver.hpp"
#include "fhl/topology.hpp"
