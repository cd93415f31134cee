#pragma once

#include "ahcq/cag.hpp"
#include "ahcq/calibration.hpp"
#include "ahcq/config.hpp"
#include "ahcq/container.hpp"
#include "ahcq/datagen.hpp"
#include "ahcq/error.hpp"
#include "ahcq/experiments.hpp"
#include "ahcq/hwsim.hpp"
#include "ahcq/kv.hpp"
#include "ahcq/params_io.hpp"
#include "ahcq/quantize_tensor.hpp"
#include "ahcq/quantizers.hpp"
#include "ahcq/reconstruction.hpp"
#include "ahcq/rng.hpp"
#include "ahcq/tensor.hpp"
