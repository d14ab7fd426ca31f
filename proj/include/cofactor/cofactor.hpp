#pragma once

#include "cofactor/adaptive_impute.hpp"
#include "cofactor/bench.hpp"
#include "cofactor/cosbm.hpp"
#include "cofactor/edge_list.hpp"
#include "cofactor/implied_matrix.hpp"
#include "cofactor/linear_operator.hpp"
#include "cofactor/low_rank.hpp"
#include "cofactor/metrics.hpp"
#include "cofactor/model_io.hpp"
#include "cofactor/partial_adjacency.hpp"
#include "cofactor/simulation.hpp"
#include "cofactor/svd.hpp"
#include "cofactor/types.hpp"
#include "cofactor/varimax.hpp"
