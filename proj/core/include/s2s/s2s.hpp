#pragma once

#include "s2s/bundle.hpp"
#include "s2s/corpus.hpp"
#include "s2s/error.hpp"
#include "s2s/evalkit.hpp"
#include "s2s/gradcheck.hpp"
#include "s2s/model.hpp"
#include "s2s/tensor.hpp"
#include "s2s/trainer.hpp"
#include "s2s/vocab.hpp"
