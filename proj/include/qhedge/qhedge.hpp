#pragma once

// Everything except estimation.hpp, which needs Ceres (link qhedge_estimation).

#include "qhedge/backtest.hpp"
#include "qhedge/bessel.hpp"
#include "qhedge/black_scholes.hpp"
#include "qhedge/diffusion_limit.hpp"
#include "qhedge/distributions.hpp"
#include "qhedge/ensemble.hpp"
#include "qhedge/error.hpp"
#include "qhedge/garch.hpp"
#include "qhedge/hedging.hpp"
#include "qhedge/io.hpp"
#include "qhedge/mc_engine.hpp"
#include "qhedge/measures.hpp"
#include "qhedge/numeric.hpp"
#include "qhedge/parallel.hpp"
#include "qhedge/presets.hpp"
#include "qhedge/random.hpp"
#include "qhedge/synthetic.hpp"
