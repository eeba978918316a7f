#pragma once

#include "ssba/boundary.hpp"
#include "ssba/boundary_io.hpp"
#include "ssba/constraints.hpp"
#include "ssba/datasets.hpp"
#include "ssba/error.hpp"
#include "ssba/eval.hpp"
#include "ssba/explain.hpp"
#include "ssba/kdtree.hpp"
#include "ssba/matrix.hpp"
#include "ssba/models.hpp"
#include "ssba/random.hpp"
