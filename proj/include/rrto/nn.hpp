#pragma once

#include "rrto/nn/architectures.hpp"
#include "rrto/nn/layers.hpp"
#include "rrto/nn/loss.hpp"
#include "rrto/nn/network.hpp"
#include "rrto/nn/optim.hpp"
#include "rrto/nn/scaler.hpp"
#include "rrto/nn/tensor.hpp"
