#pragma once

// Umbrella header for the whole library.

#include "pfp/bench.hpp"
#include "pfp/errors.hpp"
#include "pfp/kernels.hpp"
#include "pfp/logits.hpp"
#include "pfp/math.hpp"
#include "pfp/mc.hpp"
#include "pfp/model.hpp"
#include "pfp/model_io.hpp"
#include "pfp/ops.hpp"
#include "pfp/rng.hpp"
#include "pfp/tensor.hpp"
#include "pfp/uncertainty.hpp"
