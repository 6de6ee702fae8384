#pragma once

#include "deco/datagen.hpp"
#include "deco/deco.hpp"
#include "deco/error.hpp"
#include "deco/eval.hpp"
#include "deco/lasso.hpp"
#include "deco/linalg.hpp"
#include "deco/rng.hpp"
#include "deco/version.hpp"
