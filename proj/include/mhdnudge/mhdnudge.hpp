#pragma once

#include <mhdnudge/spectral.hpp>
#include <mhdnudge/mhd.hpp>
#include <mhdnudge/observation.hpp>
#include <mhdnudge/diagnostics.hpp>
#include <mhdnudge/nudging.hpp>
#include <mhdnudge/experiments.hpp>
