#pragma once

#include "chargenet/errors.hpp"
#include "chargenet/numeric/tensor.hpp"
#include "chargenet/numeric/tape.hpp"
#include "chargenet/numeric/ops.hpp"
#include "chargenet/numeric/adam.hpp"
#include "chargenet/numeric/random.hpp"
#include "chargenet/data/tokenize.hpp"
#include "chargenet/data/vocabulary.hpp"
#include "chargenet/data/embeddings.hpp"
#include "chargenet/data/dataset.hpp"
#include "chargenet/data/synthetic.hpp"
#include "chargenet/encoders.hpp"
#include "chargenet/interaction.hpp"
#include "chargenet/model/config.hpp"
#include "chargenet/model/network.hpp"
#include "chargenet/model/loss.hpp"
#include "chargenet/model/train.hpp"
#include "chargenet/model/checkpoint.hpp"
#include "chargenet/metrics.hpp"
