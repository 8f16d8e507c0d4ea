#pragma once

#include "fdrecon/error.hpp"
#include "fdrecon/core_model.hpp"
#include "fdrecon/linalg.hpp"
#include "fdrecon/factor_recon.hpp"
#include "fdrecon/selection.hpp"
#include "fdrecon/smoothing_spline.hpp"
#include "fdrecon/bands.hpp"
#include "fdrecon/random.hpp"
#include "fdrecon/parallel.hpp"
#include "fdrecon/simulation.hpp"
#include "fdrecon/io.hpp"
