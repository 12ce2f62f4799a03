#pragma once

// Umbrella header for the hard-mining loss library.

#include "hmloss/checkpoint.hpp"
#include "hmloss/config_io.hpp"
#include "hmloss/data.hpp"
#include "hmloss/errors.hpp"
#include "hmloss/gradcheck.hpp"
#include "hmloss/hard_mining.hpp"
#include "hmloss/loss_spec.hpp"
#include "hmloss/losses.hpp"
#include "hmloss/math.hpp"
#include "hmloss/matrix.hpp"
#include "hmloss/net.hpp"
#include "hmloss/optimizer.hpp"
#include "hmloss/trainer.hpp"
#include "hmloss/verify.hpp"
