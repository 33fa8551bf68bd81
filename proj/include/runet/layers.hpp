#pragma once

#include "runet/layers/activation.hpp"
#include "runet/layers/batchnorm.hpp"
#include "runet/layers/common.hpp"
#include "runet/layers/conv.hpp"
#include "runet/layers/dropout.hpp"
#include "runet/layers/pool.hpp"
#include "runet/layers/residual.hpp"
#include "runet/layers/visit.hpp"
