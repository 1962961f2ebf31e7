#pragma once

#include "detma/analysis.hpp"
#include "detma/config.hpp"
#include "detma/experiment.hpp"
#include "detma/graph.hpp"
#include "detma/lindyn.hpp"
#include "detma/sim.hpp"
#include "detma/trigger.hpp"
