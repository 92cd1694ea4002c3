// vibsync.hpp - umbrella header.

#pragma once

#include "vibsync/error.hpp"
#include "vibsync/units.hpp"
#include "vibsync/hilbert.hpp"
#include "vibsync/ode.hpp"
#include "vibsync/dynamics.hpp"
#include "vibsync/observables.hpp"
#include "vibsync/syncanalysis.hpp"
#include "vibsync/liouville.hpp"
#include "vibsync/config.hpp"
#include "vibsync/svg.hpp"
#include "vibsync/pipeline.hpp"
