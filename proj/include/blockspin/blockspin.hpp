#pragma once

// Umbrella header for the block spin Ising model toolkit.

#include "blockspin/errors.hpp"
#include "blockspin/io.hpp"
#include "blockspin/limit_theorems.hpp"
#include "blockspin/model.hpp"
#include "blockspin/numeric.hpp"
#include "blockspin/oracle.hpp"
#include "blockspin/rate_function.hpp"
#include "blockspin/sampler.hpp"
#include "blockspin/stats.hpp"
#include "blockspin/stein.hpp"
#include "blockspin/version.hpp"
