#pragma once

// Umbrella header: the whole library in one include.

#include <gasforge/bench.hpp>
#include <gasforge/chain.hpp>
#include <gasforge/csv.hpp>
#include <gasforge/demand.hpp>
#include <gasforge/errors.hpp>
#include <gasforge/features.hpp>
#include <gasforge/mechanism.hpp>
#include <gasforge/models.hpp>
#include <gasforge/rpc.hpp>
#include <gasforge/sentiment.hpp>
#include <gasforge/simulate.hpp>
#include <gasforge/timeutil.hpp>
#include <gasforge/util.hpp>
