#pragma once

// Umbrella header.

#include "snls/errors.hpp"
#include "snls/estimators.hpp"
#include "snls/geometry.hpp"
#include "snls/lattice.hpp"
#include "snls/noise.hpp"
#include "snls/parallel.hpp"
#include "snls/schemes.hpp"
#include "snls/tridiag.hpp"
#include "snls/version.hpp"
