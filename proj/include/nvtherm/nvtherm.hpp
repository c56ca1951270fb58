#pragma once

#include "nvtherm/calibration.hpp"
#include "nvtherm/config.hpp"
#include "nvtherm/errors.hpp"
#include "nvtherm/fitting.hpp"
#include "nvtherm/hermitian3.hpp"
#include "nvtherm/io.hpp"
#include "nvtherm/lineshape.hpp"
#include "nvtherm/pipeline.hpp"
#include "nvtherm/sensitivity.hpp"
#include "nvtherm/spin_model.hpp"
#include "nvtherm/vec3.hpp"
