#pragma once

#include "readagent/backend.hpp"
#include "readagent/corpus.hpp"
#include "readagent/eval.hpp"
#include "readagent/gist_cache.hpp"
#include "readagent/gisting.hpp"
#include "readagent/ledger.hpp"
#include "readagent/lookup.hpp"
#include "readagent/pagination.hpp"
#include "readagent/parsing.hpp"
#include "readagent/prompts.hpp"
#include "readagent/retrieval.hpp"
#include "readagent/runner.hpp"
