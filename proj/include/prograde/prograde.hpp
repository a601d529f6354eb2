#pragma once

// Umbrella header for the prograde library: progressive GAN training
// mechanisms, reverse-mode autodiff with second-order support, the sliced
// Wasserstein evaluation pipeline, and the dataset preparation geometry.

#include "prograde/checkpoint.hpp"
#include "prograde/common.hpp"
#include "prograde/config.hpp"
#include "prograde/dataset.hpp"
#include "prograde/gan_ops.hpp"
#include "prograde/image.hpp"
#include "prograde/kernels.hpp"
#include "prograde/losses.hpp"
#include "prograde/metrics.hpp"
#include "prograde/network.hpp"
#include "prograde/optim.hpp"
#include "prograde/progression.hpp"
#include "prograde/rng.hpp"
#include "prograde/tape.hpp"
#include "prograde/tensor.hpp"
#include "prograde/trainer.hpp"
