#pragma once

// Umbrella header: frequency-bin attention over spectrograms, miniature CNN
// backbones with exact hand-rolled gradients, and the synthetic-speaker
// experiment harness.

#include "fefa/attention.hpp"
#include "fefa/checkpoint.hpp"
#include "fefa/config.hpp"
#include "fefa/corpus.hpp"
#include "fefa/dsp.hpp"
#include "fefa/eer.hpp"
#include "fefa/evaluate.hpp"
#include "fefa/gradcheck.hpp"
#include "fefa/io.hpp"
#include "fefa/layers.hpp"
#include "fefa/matrix.hpp"
#include "fefa/model.hpp"
#include "fefa/optim.hpp"
#include "fefa/rng.hpp"
#include "fefa/tensor.hpp"
#include "fefa/train.hpp"
#include "fefa/wav.hpp"
