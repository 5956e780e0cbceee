#pragma once

// Umbrella header for the whole library.

#include "splatkit/alignment.hpp"
#include "splatkit/depth_align.hpp"
#include "splatkit/formats.hpp"
#include "splatkit/gaussians.hpp"
#include "splatkit/geometry.hpp"
#include "splatkit/image_io.hpp"
#include "splatkit/manifest.hpp"
#include "splatkit/render.hpp"
#include "splatkit/synth.hpp"
#include "splatkit/visibility.hpp"
