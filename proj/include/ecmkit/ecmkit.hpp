#pragma once

#include "ecmkit/analysis.hpp"
#include "ecmkit/config.hpp"
#include "ecmkit/ecm.hpp"
#include "ecmkit/error.hpp"
#include "ecmkit/kernel.hpp"
#include "ecmkit/machine.hpp"
#include "ecmkit/machine_io.hpp"
#include "ecmkit/probe/chain.hpp"
#include "ecmkit/probe/executor.hpp"
#include "ecmkit/probe/harness.hpp"
#include "ecmkit/probe/noise.hpp"
#include "ecmkit/probe/real.hpp"
#include "ecmkit/probe/result.hpp"
#include "ecmkit/probe/sweep.hpp"
#include "ecmkit/probe/synthetic.hpp"
#include "ecmkit/units.hpp"
