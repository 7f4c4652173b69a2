#pragma once

#include "ipdf/bench.hpp"
#include "ipdf/config.hpp"
#include "ipdf/dataset.hpp"
#include "ipdf/errors.hpp"
#include "ipdf/evaluate.hpp"
#include "ipdf/infer.hpp"
#include "ipdf/metrics.hpp"
#include "ipdf/model.hpp"
#include "ipdf/rotation.hpp"
#include "ipdf/rotation_index.hpp"
#include "ipdf/so3_grid.hpp"
#include "ipdf/symsol.hpp"
#include "ipdf/train.hpp"
#include "ipdf/viz.hpp"
