#pragma once

#include "overparam/common.hpp"
#include "overparam/rng.hpp"
#include "overparam/models.hpp"
#include "overparam/geometry.hpp"
#include "overparam/descent.hpp"
#include "overparam/potentials.hpp"
#include "overparam/bounds.hpp"
#include "overparam/oracle.hpp"
#include "overparam/config.hpp"
#include "overparam/csv.hpp"
#include "overparam/experiments.hpp"
