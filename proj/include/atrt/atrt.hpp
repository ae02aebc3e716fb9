#pragma once

#include "atrt/extrap.hpp"
#include "atrt/forward.hpp"
#include "atrt/grid.hpp"
#include "atrt/io.hpp"
#include "atrt/phantom.hpp"
#include "atrt/quad.hpp"
#include "atrt/regularize.hpp"
#include "atrt/rng.hpp"
#include "atrt/singular.hpp"
#include "atrt/solve.hpp"
#include "atrt/source.hpp"
#include "atrt/vecops.hpp"
