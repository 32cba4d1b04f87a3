#pragma once

#include <string>

#include "depthfill/core/errors.hpp"

namespace depthfill {

// The four experimental configurations. rgb_synth_depth is evaluation-only:
// it reuses the rgb_depth network and feeds it generator output.
enum class Arm { rgb_only, rgb_depth, partial_depth, rgb_synth_depth };

inline const char* arm_name(Arm a) {
    switch (a) {
        case Arm::rgb_only: return "rgb_only";
        case Arm::rgb_depth: return "rgb_depth";
        case Arm::partial_depth: return "partial_depth";
        case Arm::rgb_synth_depth: return "rgb_synth_depth";
    }
    return "?";
}

inline Arm arm_from_string(const std::string& s) {
    if (s == "rgb_only") return Arm::rgb_only;
    if (s == "rgb_depth") return Arm::rgb_depth;
    if (s == "partial_depth") return Arm::partial_depth;
    if (s == "rgb_synth_depth") return Arm::rgb_synth_depth;
    throw ConfigError("unknown arm '" + s + "'");
}

inline int arm_in_channels(Arm a) { return a == Arm::rgb_only ? 3 : 4; }

inline const char* arm_display_name(Arm a) {
    switch (a) {
        case Arm::rgb_only: return "RGB only (Lower Bound)";
        case Arm::partial_depth: return "RGB & Partial Depth (Baseline)";
        case Arm::rgb_synth_depth: return "RGB & Synthetic Depth";
        case Arm::rgb_depth: return "RGB & Depth (Upper Bound)";
    }
    return "?";
}

}  // namespace depthfill
