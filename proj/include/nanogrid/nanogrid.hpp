#pragma once

// Umbrella header for the model library (file I/O lives under nanogrid/io).

#include "nanogrid/battery_model.hpp"
#include "nanogrid/charge_controller.hpp"
#include "nanogrid/error.hpp"
#include "nanogrid/gss.hpp"
#include "nanogrid/network.hpp"
#include "nanogrid/powerflow.hpp"
#include "nanogrid/pv_model.hpp"
#include "nanogrid/simulation.hpp"
#include "nanogrid/system_config.hpp"
#include "nanogrid/timeseries.hpp"
