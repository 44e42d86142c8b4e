#pragma once

// Everything in one include.

#include "sandlab/census.hpp"
#include "sandlab/estimators.hpp"
#include "sandlab/experiment.hpp"
#include "sandlab/io.hpp"
#include "sandlab/runner.hpp"
#include "sandlab/tail.hpp"
#include "sandlab/waves.hpp"
