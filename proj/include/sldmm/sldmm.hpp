#pragma once

#include "common.hpp"
#include "datacube.hpp"
#include "graph.hpp"
#include "hsc_io.hpp"
#include "lowrank.hpp"
#include "manifest.hpp"
#include "patch.hpp"
#include "solver.hpp"
#include "sparse.hpp"
