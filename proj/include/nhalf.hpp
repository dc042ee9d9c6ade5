#pragma once

#include "nhalf/activation.hpp"
#include "nhalf/checkpoint.hpp"
#include "nhalf/compile.hpp"
#include "nhalf/config.hpp"
#include "nhalf/counters.hpp"
#include "nhalf/dataset.hpp"
#include "nhalf/engine.hpp"
#include "nhalf/error.hpp"
#include "nhalf/fused_model.hpp"
#include "nhalf/fusion.hpp"
#include "nhalf/image.hpp"
#include "nhalf/io.hpp"
#include "nhalf/kernels.hpp"
#include "nhalf/reference.hpp"
#include "nhalf/stats.hpp"
#include "nhalf/tensor.hpp"
