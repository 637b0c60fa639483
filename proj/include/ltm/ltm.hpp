#pragma once

#include "ltm/error.hpp"
#include "ltm/variable.hpp"
#include "ltm/random.hpp"
#include "ltm/dataset.hpp"
#include "ltm/model.hpp"
#include "ltm/model_io.hpp"
#include "ltm/inference.hpp"
#include "ltm/sampling.hpp"
#include "ltm/score.hpp"
#include "ltm/information.hpp"
#include "ltm/em.hpp"
#include "ltm/learning.hpp"
#include "ltm/chow_liu.hpp"
#include "ltm/recursive_grouping.hpp"
#include "ltm/bridged_islands.hpp"
#include "ltm/hlta.hpp"
#include "ltm/clustering.hpp"
#include "ltm/config.hpp"
