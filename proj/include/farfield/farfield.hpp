#pragma once

#include "farfield/activity.hpp"
#include "farfield/beamforming.hpp"
#include "farfield/cacgmm.hpp"
#include "farfield/channel_select.hpp"
#include "farfield/channel_sync.hpp"
#include "farfield/der.hpp"
#include "farfield/error.hpp"
#include "farfield/gss.hpp"
#include "farfield/rectify.hpp"
#include "farfield/rttm.hpp"
#include "farfield/segments.hpp"
#include "farfield/sim.hpp"
#include "farfield/stft.hpp"
#include "farfield/wav_io.hpp"
#include "farfield/wave.hpp"
