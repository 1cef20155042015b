#pragma once

// Umbrella header for the lazyvi library: variable-importance inference for
// feedforward ReLU networks via dropout imputation, full retraining, and a
// ridge-penalized linearized correction in gradient-feature space, with Wald
// confidence intervals, Shapley attribution and remove-and-retrain curves.

#include "lazyvi/analytic.hpp"
#include "lazyvi/core.hpp"
#include "lazyvi/data.hpp"
#include "lazyvi/estimators.hpp"
#include "lazyvi/experiments.hpp"
#include "lazyvi/linalg.hpp"
#include "lazyvi/network.hpp"
#include "lazyvi/ridge.hpp"
#include "lazyvi/roar.hpp"
#include "lazyvi/shapley.hpp"
#include "lazyvi/stats.hpp"
