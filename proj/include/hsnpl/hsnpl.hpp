#pragma once

#include "hsnpl/core/autodiff.hpp"
#include "hsnpl/core/errors.hpp"
#include "hsnpl/core/parameters.hpp"
#include "hsnpl/core/rng.hpp"
#include "hsnpl/datasets/behavior.hpp"
#include "hsnpl/datasets/graph.hpp"
#include "hsnpl/datasets/kfold.hpp"
#include "hsnpl/datasets/records.hpp"
#include "hsnpl/datasets/synthetic.hpp"
#include "hsnpl/hetgat/hetgat.hpp"
#include "hsnpl/sds/mapping.hpp"
#include "hsnpl/sds/scale.hpp"
#include "hsnpl/subcon/subcon.hpp"
#include "hsnpl/trainer/ablate.hpp"
#include "hsnpl/trainer/checkpoint.hpp"
#include "hsnpl/trainer/config.hpp"
#include "hsnpl/trainer/embed.hpp"
#include "hsnpl/trainer/gradcheck.hpp"
#include "hsnpl/trainer/metrics.hpp"
#include "hsnpl/trainer/model.hpp"
#include "hsnpl/trainer/train.hpp"
