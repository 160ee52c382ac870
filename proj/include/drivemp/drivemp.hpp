#pragma once

// Umbrella header for the drivemp library.

#include "drivemp/error.hpp"
#include "drivemp/trace.hpp"
#include "drivemp/csv.hpp"
#include "drivemp/ingest.hpp"
#include "drivemp/gmm.hpp"
#include "drivemp/gmm_io.hpp"
#include "drivemp/gmr.hpp"
#include "drivemp/path_level.hpp"
#include "drivemp/motion_level.hpp"
#include "drivemp/predict.hpp"
#include "drivemp/eval.hpp"
#include "drivemp/bundle_io.hpp"
#include "drivemp/synth.hpp"
