#pragma once

#include "marcq/chain_builder.hpp"
#include "marcq/closed_form_k2.hpp"
#include "marcq/errors.hpp"
#include "marcq/experiments.hpp"
#include "marcq/labeled_ctmc.hpp"
#include "marcq/marc.hpp"
#include "marcq/parallel.hpp"
#include "marcq/rng.hpp"
#include "marcq/sim.hpp"
#include "marcq/stats.hpp"
#include "marcq/workload.hpp"
#include "marcq/workload_io.hpp"
