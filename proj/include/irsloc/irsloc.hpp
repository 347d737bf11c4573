#pragma once

#include "irsloc/linalg.hpp"
#include "irsloc/random.hpp"
#include "irsloc/scene.hpp"
#include "irsloc/pilot.hpp"
#include "irsloc/chanest.hpp"
#include "irsloc/bqp.hpp"
#include "irsloc/localize.hpp"
#include "irsloc/waveopt.hpp"
#include "irsloc/harness.hpp"
#include "irsloc/config.hpp"
