#pragma once

// Umbrella header.

#include "textcot/app.hpp"
#include "textcot/backend.hpp"
#include "textcot/client.hpp"
#include "textcot/config.hpp"
#include "textcot/dataset.hpp"
#include "textcot/error.hpp"
#include "textcot/geometry.hpp"
#include "textcot/hashing.hpp"
#include "textcot/http_backend.hpp"
#include "textcot/image_io.hpp"
#include "textcot/metrics.hpp"
#include "textcot/pipeline.hpp"
#include "textcot/prompting.hpp"
#include "textcot/raster.hpp"
#include "textcot/store.hpp"
#include "textcot/synthetic.hpp"
