#pragma once

#include "invis/config.hpp"

namespace fixtures {

// Default configs resolved once per test binary; resolution is deterministic.
inline const invis::Setup& default_n2() {
  static const invis::Setup setup = invis::resolve_config(invis::default_config());
  return setup;
}

inline const invis::Setup& default_n3() {
  static const invis::Setup setup = invis::resolve_config(
      invis::apply_overrides(invis::default_config(), {"n=3"}));
  return setup;
}

}  // namespace fixtures
