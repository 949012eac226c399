#pragma once

#include "vtrace/errors.hpp"
#include "vtrace/gradcheck.hpp"
#include "vtrace/grpo.hpp"
#include "vtrace/io.hpp"
#include "vtrace/metrics.hpp"
#include "vtrace/pipeline/client.hpp"
#include "vtrace/pipeline/dataset_io.hpp"
#include "vtrace/pipeline/prompts.hpp"
#include "vtrace/pipeline/runner.hpp"
#include "vtrace/pipeline/stages.hpp"
#include "vtrace/pipeline/types.hpp"
#include "vtrace/rewards.hpp"
#include "vtrace/trace.hpp"
