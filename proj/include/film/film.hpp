#pragma once

#include "film/concordance.hpp"
#include "film/dataset.hpp"
#include "film/error.hpp"
#include "film/experiment.hpp"
#include "film/ipip.hpp"
#include "film/learners.hpp"
#include "film/metrics.hpp"
#include "film/records.hpp"
#include "film/resampling.hpp"
#include "film/rng.hpp"
#include "film/serialize.hpp"
#include "film/uic.hpp"
