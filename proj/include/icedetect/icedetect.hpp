#pragma once

#include "core.hpp"
#include "evaluate.hpp"
#include "lob_ingest.hpp"
#include "model_io.hpp"
#include "native_detect.hpp"
#include "pipeline.hpp"
#include "predict.hpp"
#include "simgen.hpp"
#include "survival_model.hpp"
#include "synthetic_detect.hpp"
