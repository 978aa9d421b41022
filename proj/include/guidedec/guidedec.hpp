#pragma once

#include "guidedec/core_types.hpp"
#include "guidedec/error.hpp"
#include "guidedec/guided_decoder.hpp"
#include "guidedec/metrics.hpp"
#include "guidedec/model_interface.hpp"
#include "guidedec/normalizer.hpp"
#include "guidedec/rng.hpp"
#include "guidedec/sampling.hpp"
#include "guidedec/serialization.hpp"
#include "guidedec/tokenizer.hpp"
#include "guidedec/vocab_align.hpp"
