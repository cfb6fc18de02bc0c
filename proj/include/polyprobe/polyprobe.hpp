#pragma once

#include "polyprobe/attention.hpp"
#include "polyprobe/commands.hpp"
#include "polyprobe/corpus.hpp"
#include "polyprobe/error.hpp"
#include "polyprobe/geometry.hpp"
#include "polyprobe/io.hpp"
#include "polyprobe/pipeline/analyses.hpp"
#include "polyprobe/pipeline/probe.hpp"
#include "polyprobe/pipeline/records.hpp"
#include "polyprobe/pipeline/simulate.hpp"
#include "polyprobe/report.hpp"
#include "polyprobe/stats/aic.hpp"
#include "polyprobe/stats/lmm.hpp"
#include "polyprobe/stats/ols.hpp"
#include "polyprobe/trace_store.hpp"
