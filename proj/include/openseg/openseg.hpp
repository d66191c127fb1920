#pragma once

#include "openseg/aligner.hpp"
#include "openseg/backends/backend.hpp"
#include "openseg/backends/mock.hpp"
#include "openseg/composer.hpp"
#include "openseg/core/manifest.hpp"
#include "openseg/ensemble.hpp"
#include "openseg/metrics.hpp"
#include "openseg/pipeline/config.hpp"
#include "openseg/reasoner/reasoner.hpp"
