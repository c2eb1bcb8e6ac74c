#pragma once

#include "tamed/experiments.hpp"
#include "tamed/grid.hpp"
#include "tamed/io.hpp"
#include "tamed/levy.hpp"
#include "tamed/model.hpp"
#include "tamed/parallel.hpp"
#include "tamed/rng.hpp"
#include "tamed/scheme.hpp"
