#ifndef KDNLI_HPP_
#define KDNLI_HPP_

#include "kdnli/autodiff.hpp"
#include "kdnli/cache.hpp"
#include "kdnli/checkpoint.hpp"
#include "kdnli/config.hpp"
#include "kdnli/data.hpp"
#include "kdnli/distill.hpp"
#include "kdnli/encoder.hpp"
#include "kdnli/error.hpp"
#include "kdnli/eval.hpp"
#include "kdnli/head.hpp"
#include "kdnli/optim.hpp"
#include "kdnli/train.hpp"
#include "kdnli/translate.hpp"
#include "kdnli/vocab.hpp"

#endif  // KDNLI_HPP_
