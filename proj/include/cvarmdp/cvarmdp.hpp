#pragma once

#include "cvarmdp/model.hpp"
#include "cvarmdp/chain.hpp"
#include "cvarmdp/risk.hpp"
#include "cvarmdp/solve.hpp"
#include "cvarmdp/portfolio.hpp"
#include "cvarmdp/io.hpp"
