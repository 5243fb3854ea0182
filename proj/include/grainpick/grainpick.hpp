#pragma once

#include "grainpick/config.hpp"
#include "grainpick/dataset.hpp"
#include "grainpick/errors.hpp"
#include "grainpick/estimators.hpp"
#include "grainpick/harness.hpp"
#include "grainpick/material.hpp"
#include "grainpick/mlp.hpp"
#include "grainpick/patch.hpp"
#include "grainpick/rng.hpp"
#include "grainpick/selection.hpp"
#include "grainpick/sim.hpp"
#include "grainpick/tray.hpp"
