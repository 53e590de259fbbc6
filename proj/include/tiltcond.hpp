#pragma once

#include "tiltcond/common.hpp"
#include "tiltcond/conditional_law.hpp"
#include "tiltcond/distributions.hpp"
#include "tiltcond/edgeworth.hpp"
#include "tiltcond/importance_sampling.hpp"
#include "tiltcond/io.hpp"
#include "tiltcond/oracle.hpp"
#include "tiltcond/parallel.hpp"
#include "tiltcond/quadrature.hpp"
#include "tiltcond/rng.hpp"
#include "tiltcond/tilting.hpp"
