#pragma once

#include "linalg.hpp"
#include "rng.hpp"
#include "constraints.hpp"
#include "sem.hpp"
#include "objective.hpp"
#include "optim.hpp"
#include "metrics.hpp"
#include "version.hpp"
