#pragma once

#include "lstmcaps/benchmark.hpp"
#include "lstmcaps/checkpoint.hpp"
#include "lstmcaps/config.hpp"
#include "lstmcaps/csv.hpp"
#include "lstmcaps/data.hpp"
#include "lstmcaps/detector.hpp"
#include "lstmcaps/layers.hpp"
#include "lstmcaps/metrics.hpp"
#include "lstmcaps/model.hpp"
#include "lstmcaps/report.hpp"
#include "lstmcaps/synthetic.hpp"
#include "lstmcaps/tensor.hpp"
#include "lstmcaps/train.hpp"
