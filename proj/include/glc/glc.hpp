#pragma once

#include "glc/adapt.hpp"
#include "glc/errors.hpp"
#include "glc/global_pseudo.hpp"
#include "glc/kmeans.hpp"
#include "glc/matrix.hpp"
#include "glc/memory_bank.hpp"
#include "glc/metrics.hpp"
#include "glc/model.hpp"
#include "glc/numeric.hpp"
#include "glc/rng.hpp"
#include "glc/scenario.hpp"
#include "glc/silhouette.hpp"
