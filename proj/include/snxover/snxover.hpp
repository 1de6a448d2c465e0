#ifndef SNXOVER_SNXOVER_HPP_
#define SNXOVER_SNXOVER_HPP_

#include "snxover/covariance.hpp"
#include "snxover/design.hpp"
#include "snxover/diagnostics.hpp"
#include "snxover/em.hpp"
#include "snxover/io.hpp"
#include "snxover/likelihood.hpp"
#include "snxover/model.hpp"
#include "snxover/q_function.hpp"
#include "snxover/random.hpp"
#include "snxover/simulation.hpp"
#include "snxover/skew_normal.hpp"
#include "snxover/special_functions.hpp"

#endif  // SNXOVER_SNXOVER_HPP_
