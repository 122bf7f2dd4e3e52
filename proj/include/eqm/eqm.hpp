#pragma once

#include "eqm/bitio.hpp"
#include "eqm/config.hpp"
#include "eqm/dataset.hpp"
#include "eqm/errors.hpp"
#include "eqm/evaluation.hpp"
#include "eqm/forest.hpp"
#include "eqm/frame_features.hpp"
#include "eqm/fusion.hpp"
#include "eqm/hevc.hpp"
#include "eqm/log.hpp"
#include "eqm/model.hpp"
#include "eqm/parallel.hpp"
#include "eqm/pooling.hpp"
#include "eqm/rng.hpp"
#include "eqm/rq.hpp"
#include "eqm/synth.hpp"
#include "eqm/textio.hpp"
#include "eqm/trace.hpp"
#include "eqm/version.hpp"
