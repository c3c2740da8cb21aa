#pragma once

// Umbrella header for the Linear Emotion Space engine.

#include "les/au.hpp"
#include "les/catalog.hpp"
#include "les/cdan.hpp"
#include "les/cluster.hpp"
#include "les/csv.hpp"
#include "les/dataset_stats.hpp"
#include "les/error.hpp"
#include "les/injector.hpp"
#include "les/serialize.hpp"
#include "les/space.hpp"
#include "les/stats.hpp"
