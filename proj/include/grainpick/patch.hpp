#pragma once

#include <cstdint>
#include <vector>

#include "grainpick/errors.hpp"
#include "grainpick/rng.hpp"
#include "grainpick/tray.hpp"

namespace grainpick {

/// Network input: a 2-channel P x P window around a grasp point. Channel 0
/// holds heights relative to the window center (the center cell is exactly
/// zero), channel 1 the surface appearance. Stored as float32, which is also
/// the on-disk precision.
struct Patch {
    int side = 0;  // P
    int center_x = 0;
    int center_y = 0;
    std::vector<float> data;  // 2 * P * P, channel-major [c][row][col]

    static constexpr int kChannels = 2;

    Patch() = default;
    explicit Patch(int side_) : side(side_),
        data(static_cast<std::size_t>(kChannels) * side_ * side_, 0.0f) {}

    std::size_t idx(int c, int r, int col) const {
        return (static_cast<std::size_t>(c) * side + r) * side + col;
    }
    float& at(int c, int r, int col) { return data[idx(c, r, col)]; }
    float at(int c, int r, int col) const { return data[idx(c, r, col)]; }

    bool operator==(const Patch& o) const {
        return side == o.side && center_x == o.center_x && center_y == o.center_y &&
               data == o.data;
    }
};

/// Window of a patch of side P centered on a cell: rows [y - P/2, y + P - P/2),
/// so the center lands on local index (P/2, P/2).
inline bool patch_window_in_bounds(const Tray& tray, int x, int y, int side) {
    const int lo = side / 2;
    const int hi = side - lo;  // exclusive extent to the right/bottom
    return x - lo >= 0 && y - lo >= 0 && x + hi <= tray.cols && y + hi <= tray.rows;
}

/// Crop the 2-channel window around (x, y). Never mutates the tray. The
/// relative-height channel is a subtraction of the center height, so the
/// center value is exactly zero, not merely close to it.
inline Patch crop_patch(const Tray& tray, int x, int y, int side) {
    if (!patch_window_in_bounds(tray, x, y, side))
        throw sim_error("patch window out of tray bounds at (" + std::to_string(x) + ", " +
                        std::to_string(y) + ")");
    Patch p(side);
    p.center_x = x;
    p.center_y = y;
    const int lo = side / 2;
    const double hc = tray.h(y, x);
    for (int r = 0; r < side; ++r) {
        const int yy = y - lo + r;
        for (int c = 0; c < side; ++c) {
            const int xx = x - lo + c;
            p.at(0, r, c) = static_cast<float>(tray.h(yy, xx) - hc);
            p.at(1, r, c) = static_cast<float>(tray.intensity[tray.idx(yy, xx)]);
        }
    }
    return p;
}

/// Deterministic flip of all channels jointly.
inline Patch flip(const Patch& in, bool flip_rows, bool flip_cols) {
    Patch out(in.side);
    out.center_x = in.center_x;
    out.center_y = in.center_y;
    for (int c = 0; c < Patch::kChannels; ++c)
        for (int r = 0; r < in.side; ++r)
            for (int col = 0; col < in.side; ++col) {
                const int rr = flip_rows ? in.side - 1 - r : r;
                const int cc = flip_cols ? in.side - 1 - col : col;
                out.at(c, r, col) = in.at(c, rr, cc);
            }
    return out;
}

/// Gripper-symmetry augmentation: vertical and horizontal flips, each applied
/// independently with probability 0.5. The mass label is kept by the caller.
inline Patch flip_augment(const Patch& in, Rng& rng) {
    const bool fr = rng.bernoulli(0.5);
    const bool fc = rng.bernoulli(0.5);
    return flip(in, fr, fc);
}

}  // namespace grainpick
