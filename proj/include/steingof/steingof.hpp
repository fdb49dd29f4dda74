#pragma once

#include "steingof/baselines.hpp"
#include "steingof/bootstrap.hpp"
#include "steingof/common.hpp"
#include "steingof/estimators.hpp"
#include "steingof/harness.hpp"
#include "steingof/kernels.hpp"
#include "steingof/models.hpp"
#include "steingof/samplers.hpp"
#include "steingof/stein.hpp"
