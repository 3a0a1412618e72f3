#pragma once

#include "mibci/classifier.hpp"
#include "mibci/csp.hpp"
#include "mibci/dsp.hpp"
#include "mibci/epoch_io.hpp"
#include "mibci/error.hpp"
#include "mibci/eval.hpp"
#include "mibci/model_io.hpp"
#include "mibci/rng.hpp"
#include "mibci/session.hpp"
#include "mibci/signal_model.hpp"
#include "mibci/spectral.hpp"
#include "mibci/synthgen.hpp"
