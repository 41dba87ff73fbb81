#ifndef ROMD_ROMD_HPP
#define ROMD_ROMD_HPP

#include "romd/baselines.hpp"
#include "romd/cg.hpp"
#include "romd/dict_update.hpp"
#include "romd/learner.hpp"
#include "romd/linalg.hpp"
#include "romd/metrics.hpp"
#include "romd/omp.hpp"
#include "romd/rng.hpp"
#include "romd/support.hpp"
#include "romd/synth.hpp"
#include "romd/version.hpp"

#endif  // ROMD_ROMD_HPP
