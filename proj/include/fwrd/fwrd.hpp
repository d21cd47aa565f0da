#pragma once

#include "fwrd/adam.hpp"
#include "fwrd/anomaly.hpp"
#include "fwrd/autodiff.hpp"
#include "fwrd/checkpoint.hpp"
#include "fwrd/config.hpp"
#include "fwrd/distill_loss.hpp"
#include "fwrd/experiment.hpp"
#include "fwrd/image.hpp"
#include "fwrd/io.hpp"
#include "fwrd/metrics.hpp"
#include "fwrd/ops.hpp"
#include "fwrd/raster.hpp"
#include "fwrd/rd_model.hpp"
#include "fwrd/slide.hpp"
#include "fwrd/tensor.hpp"
