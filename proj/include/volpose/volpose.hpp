#pragma once

#include "volpose/error.hpp"
#include "volpose/parallel.hpp"
#include "volpose/geometry.hpp"
#include "volpose/heatmap.hpp"
#include "volpose/skeleton.hpp"
#include "volpose/detect.hpp"
#include "volpose/posecube.hpp"
#include "volpose/temporal.hpp"
#include "volpose/track.hpp"
#include "volpose/metrics.hpp"
#include "volpose/simkit.hpp"
#include "volpose/io.hpp"
#include "volpose/pipeline.hpp"
