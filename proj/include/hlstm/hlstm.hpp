// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "hlstm/binary.hpp"
#include "hlstm/cells.hpp"
#include "hlstm/checkpoint.hpp"
#include "hlstm/config.hpp"
#include "hlstm/dataio.hpp"
#include "hlstm/gradcheck.hpp"
#include "hlstm/historical.hpp"
#include "hlstm/network.hpp"
#include "hlstm/numerics.hpp"
#include "hlstm/optim.hpp"
#include "hlstm/random.hpp"
#include "hlstm/trainer.hpp"
