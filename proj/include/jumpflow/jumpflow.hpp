#pragma once

// Umbrella header for the jumpflow library.

#include "jumpflow/types.hpp"
#include "jumpflow/rng.hpp"
#include "jumpflow/survival.hpp"
#include "jumpflow/model.hpp"
#include "jumpflow/generator.hpp"
#include "jumpflow/solver.hpp"
#include "jumpflow/estimates.hpp"
#include "jumpflow/pathology.hpp"
#include "jumpflow/control.hpp"
#include "jumpflow/config.hpp"
#include "jumpflow/experiments.hpp"
