#pragma once

#include "seqmc/analysis.hpp"
#include "seqmc/engine.hpp"
#include "seqmc/errors.hpp"
#include "seqmc/experiments.hpp"
#include "seqmc/flow.hpp"
#include "seqmc/kernels.hpp"
#include "seqmc/numeric.hpp"
#include "seqmc/particle_run.hpp"
#include "seqmc/path.hpp"
#include "seqmc/random.hpp"
#include "seqmc/ssm.hpp"
