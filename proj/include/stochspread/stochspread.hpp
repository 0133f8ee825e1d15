#pragma once

#include "stochspread/backtest.hpp"
#include "stochspread/cointegration.hpp"
#include "stochspread/date.hpp"
#include "stochspread/error.hpp"
#include "stochspread/estimation.hpp"
#include "stochspread/market_data.hpp"
#include "stochspread/pipeline.hpp"
#include "stochspread/report.hpp"
#include "stochspread/rng.hpp"
#include "stochspread/simulate.hpp"
#include "stochspread/spread_model.hpp"
