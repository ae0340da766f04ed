// Umbrella header.
#pragma once

#include "lqg_turnpike/matrix_core.hpp"
#include "lqg_turnpike/game_model.hpp"
#include "lqg_turnpike/riccati_finite.hpp"
#include "lqg_turnpike/riccati_ergodic.hpp"
#include "lqg_turnpike/envelope.hpp"
#include "lqg_turnpike/assumptions.hpp"
#include "lqg_turnpike/simulate.hpp"
#include "lqg_turnpike/turnpike.hpp"
#include "lqg_turnpike/verify.hpp"
