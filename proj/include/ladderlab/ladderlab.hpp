#pragma once

#include "ladderlab/cli.hpp"
#include "ladderlab/dynamics.hpp"
#include "ladderlab/errors.hpp"
#include "ladderlab/finite_difference.hpp"
#include "ladderlab/ladder.hpp"
#include "ladderlab/ladder_algebra.hpp"
#include "ladderlab/phase_core.hpp"
#include "ladderlab/polynomial.hpp"
#include "ladderlab/potentials.hpp"
#include "ladderlab/roots.hpp"
#include "ladderlab/run_config.hpp"
#include "ladderlab/superint.hpp"
#include "ladderlab/svg.hpp"
#include "ladderlab/verify.hpp"
