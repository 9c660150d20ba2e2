#pragma once

#include "mjslqr/adaptive.hpp"
#include "mjslqr/errors.hpp"
#include "mjslqr/linalg.hpp"
#include "mjslqr/lqr.hpp"
#include "mjslqr/markov.hpp"
#include "mjslqr/model.hpp"
#include "mjslqr/moments.hpp"
#include "mjslqr/random.hpp"
#include "mjslqr/sysid.hpp"
