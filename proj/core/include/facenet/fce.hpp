#pragma once

#include <string>
#include <vector>

#include "facenet/backbone.hpp"

namespace facenet::fce {

enum class MaskMode { binary, soft };
std::string to_string(MaskMode m);
MaskMode parse_mask_mode(const std::string& text);

struct EnhancedFeature {
  Var values;
  nn::Spectrum spectrum = nn::Spectrum::rgb;
  std::vector<bool> enhanced_flags;
};

/// Per applied sample: f_T * M + f_S * (1 - M). Samples with apply[b] false
/// pass f_S through untouched. Cells where M is exactly 0 or 1 select f_S or
/// f_T directly, so binary masks composite without rounding.
/// Throws ShapeError on mismatched shapes, ValidationError on M outside [0,1].
EnhancedFeature enhance(const nn::FeatureMap& f_s, const nn::FeatureMap& f_t, const Var& mask,
                        const std::vector<bool>& apply);

}  // namespace facenet::fce
