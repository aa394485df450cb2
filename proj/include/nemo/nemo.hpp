#pragma once

#include "nemo/errors.hpp"
#include "nemo/linalg.hpp"
#include "nemo/operators.hpp"
#include "nemo/problems.hpp"
#include "nemo/linear_solvers.hpp"
#include "nemo/multilevel.hpp"
#include "nemo/analysis.hpp"
#include "nemo/experiment.hpp"
