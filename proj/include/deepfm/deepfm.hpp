#pragma once

#include "deepfm/checkpoint.hpp"
#include "deepfm/common.hpp"
#include "deepfm/dataset.hpp"
#include "deepfm/embedding.hpp"
#include "deepfm/fm_head.hpp"
#include "deepfm/harness.hpp"
#include "deepfm/interpret.hpp"
#include "deepfm/linear.hpp"
#include "deepfm/metrics.hpp"
#include "deepfm/mlp_head.hpp"
#include "deepfm/model.hpp"
#include "deepfm/schema.hpp"
#include "deepfm/synth.hpp"
#include "deepfm/trainer.hpp"

namespace deepfm {
inline constexpr std::string_view kVersion = "0.1.0";
}  // namespace deepfm
