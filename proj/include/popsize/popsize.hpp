#pragma once

#include "popsize/commands.hpp"
#include "popsize/dataset.hpp"
#include "popsize/error.hpp"
#include "popsize/estimators.hpp"
#include "popsize/identification.hpp"
#include "popsize/io.hpp"
#include "popsize/learners.hpp"
#include "popsize/numeric.hpp"
#include "popsize/nuisance.hpp"
#include "popsize/profile.hpp"
#include "popsize/simulate.hpp"
