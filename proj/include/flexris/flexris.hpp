#pragma once

#include "flexris/binary_io.hpp"
#include "flexris/channel.hpp"
#include "flexris/config.hpp"
#include "flexris/estimator_nls.hpp"
#include "flexris/estimator_nn.hpp"
#include "flexris/evaluation.hpp"
#include "flexris/geometry.hpp"
#include "flexris/measurement.hpp"
#include "flexris/parallel.hpp"
#include "flexris/phase_design.hpp"
#include "flexris/rng.hpp"
