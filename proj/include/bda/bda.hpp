#pragma once

#include "bda/cluster.hpp"
#include "bda/dataio.hpp"
#include "bda/error.hpp"
#include "bda/line_search.hpp"
#include "bda/model.hpp"
#include "bda/objective.hpp"
#include "bda/oracle.hpp"
#include "bda/solver.hpp"
#include "bda/subproblem.hpp"
#include "bda/trace.hpp"
