#pragma once

#include "damflow/cross_validate.hpp"
#include "damflow/curve.hpp"
#include "damflow/cuts.hpp"
#include "damflow/elliptic.hpp"
#include "damflow/flow.hpp"
#include "damflow/param_solver.hpp"
#include "damflow/polygon.hpp"
#include "damflow/rect.hpp"
#include "damflow/sc_map.hpp"
#include "damflow/sc_oracle.hpp"
#include "damflow/theta.hpp"
