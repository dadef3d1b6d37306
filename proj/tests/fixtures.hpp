#pragma once

#include "damflow/param_solver.hpp"
#include "damflow/sc_map.hpp"

namespace fixtures {

inline damflow::PolygonSpec p_test() { return {{-1.0, 1.0, 1.0, -1.0, 2.0}, 3.0, 3.0}; }

inline const damflow::MappingParams& p_test_params() {
  static const damflow::MappingParams mp = damflow::solve_params(p_test());
  return mp;
}

inline const damflow::MappingParams& anchor_params() {
  static const damflow::MappingParams mp = damflow::bootstrap_anchor().second;
  return mp;
}

inline const damflow::ScMap& p_test_map() {
  static const damflow::ScMap map(p_test_params());
  return map;
}

inline const damflow::ScMap& anchor_map() {
  static const damflow::ScMap map(anchor_params());
  return map;
}

}  // namespace fixtures
