#pragma once

#include "prime/core.hpp"
#include "prime/estimators.hpp"
#include "prime/imputation.hpp"
#include "prime/metrics.hpp"
#include "prime/projection.hpp"
#include "prime/rng.hpp"
#include "prime/simgen.hpp"
