#pragma once

#include "bootstrap.hpp"
#include "common.hpp"
#include "csv.hpp"
#include "data.hpp"
#include "dgp.hpp"
#include "diagnostics.hpp"
#include "dose.hpp"
#include "harness.hpp"
#include "longitudinal.hpp"
#include "nuisance.hpp"
#include "oracle.hpp"
#include "point.hpp"
#include "regime.hpp"
#include "regression.hpp"
#include "rng.hpp"
#include "scores.hpp"
#include "spline.hpp"
#include "weighting.hpp"
