#pragma once

#include "tropeline/corpus.hpp"
#include "tropeline/error.hpp"
#include "tropeline/eval.hpp"
#include "tropeline/external_scorer.hpp"
#include "tropeline/pipeline.hpp"
#include "tropeline/scorer.hpp"
#include "tropeline/synth.hpp"
#include "tropeline/vectorspace.hpp"
