#pragma once

#include <string>

#include "grainpick/errors.hpp"

namespace grainpick {

/// Material behaviour of one granular food. density_scale is a calibration
/// constant relating captured volume to grasped mass; it is tuned so the
/// simulated grasp-mass distributions match the targeted means and spreads,
/// not a tabulated bulk density.
struct MaterialParams {
    std::string name;
    double density_scale = 1.0;   // g per cm^3 of captured volume
    double noise_cv = 0.0;        // coefficient of variation of grasp noise
    double repose_slope = 4.0;    // max stable height step between adjacent cells, mm
    double capacity_g = 100.0;    // gripper capacity per grasp, g
    double breakage_prob = 0.0;   // chance a grasp loses a random fraction
    double compress_factor = 1.0; // captured-volume multiplier in (0, 1]

    void validate() const {
        if (name.empty()) throw config_error("material name must be non-empty");
        if (!(density_scale > 0.0))
            throw config_error(name + ": density_scale must be > 0");
        if (noise_cv < 0.0) throw config_error(name + ": noise_cv must be >= 0");
        if (!(repose_slope > 0.0))
            throw config_error(name + ": repose_slope must be > 0");
        if (!(capacity_g > 0.0)) throw config_error(name + ": capacity_g must be > 0");
        if (breakage_prob < 0.0 || breakage_prob > 1.0)
            throw config_error(name + ": breakage_prob must be in [0, 1]");
        if (!(compress_factor > 0.0) || compress_factor > 1.0)
            throw config_error(name + ": compress_factor must be in (0, 1]");
    }
};

}  // namespace grainpick
