#pragma once

// Umbrella header for the estimation library (everything except the CLI).

#include "scm/config.hpp"
#include "scm/csv.hpp"
#include "scm/effects.hpp"
#include "scm/error.hpp"
#include "scm/inference.hpp"
#include "scm/panel.hpp"
#include "scm/parallel.hpp"
#include "scm/period.hpp"
#include "scm/report.hpp"
#include "scm/robustness.hpp"
#include "scm/solver.hpp"
#include "scm/study.hpp"
#include "scm/version.hpp"
