#pragma once

#include "mvrd/codec/codec.hpp"
#include "mvrd/codec/entropy.hpp"
#include "mvrd/codec/intra.hpp"
#include "mvrd/codec/rdo.hpp"
#include "mvrd/codec/transform.hpp"
#include "mvrd/error.hpp"
#include "mvrd/features.hpp"
#include "mvrd/frame.hpp"
#include "mvrd/metrics.hpp"
#include "mvrd/msfd.hpp"
#include "mvrd/rate_control.hpp"
#include "mvrd/roim.hpp"
#include "mvrd/satd.hpp"
