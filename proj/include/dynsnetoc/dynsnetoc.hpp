#pragma once

// Umbrella header for the dynamic sparse network toolkit.

#include "errors.hpp"
#include "random.hpp"
#include "model.hpp"
#include "generator.hpp"
#include "nuts.hpp"
#include "chain.hpp"
#include "inference.hpp"
#include "diagnostics.hpp"
#include "io.hpp"
