#pragma once

#include "advcheck/errors.hpp"
#include "advcheck/numerics.hpp"
#include "advcheck/threat.hpp"
#include "advcheck/models.hpp"
#include "advcheck/attacks/common.hpp"
#include "advcheck/attacks/gradient.hpp"
#include "advcheck/attacks/estimators.hpp"
#include "advcheck/attacks/boundary.hpp"
#include "advcheck/attacks/search.hpp"
#include "advcheck/attacks/adaptive.hpp"
#include "advcheck/dataset.hpp"
#include "advcheck/diagnostics.hpp"
#include "advcheck/config.hpp"
#include "advcheck/evaluation.hpp"
