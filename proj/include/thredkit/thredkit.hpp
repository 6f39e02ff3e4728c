#ifndef THREDKIT_THREDKIT_HPP
#define THREDKIT_THREDKIT_HPP

#include "thredkit/autodiff.hpp"
#include "thredkit/checkpoint.hpp"
#include "thredkit/corpus.hpp"
#include "thredkit/decode.hpp"
#include "thredkit/error.hpp"
#include "thredkit/grad_check.hpp"
#include "thredkit/metrics.hpp"
#include "thredkit/model.hpp"
#include "thredkit/rng.hpp"
#include "thredkit/run_config.hpp"
#include "thredkit/tensor.hpp"
#include "thredkit/topics.hpp"
#include "thredkit/train.hpp"

#endif  // THREDKIT_THREDKIT_HPP
