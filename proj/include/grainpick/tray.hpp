#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "grainpick/config.hpp"
#include "grainpick/errors.hpp"
#include "grainpick/material.hpp"
#include "grainpick/rng.hpp"

namespace grainpick {

/// Simulated world state: a heightfield (mm) plus a surface-appearance grid
/// in [0, 1] that stands in for the camera's RGB channel. x indexes columns,
/// y indexes rows, everywhere in this library.
struct Tray {
    int rows = 0;
    int cols = 0;
    double cell_size_mm = 5.0;
    MaterialParams material;
    std::vector<double> heights;    // rows * cols, mm, >= 0
    std::vector<double> intensity;  // rows * cols, [0, 1]

    Tray() = default;
    Tray(int rows_, int cols_, double cell_mm, MaterialParams mat)
        : rows(rows_), cols(cols_), cell_size_mm(cell_mm), material(std::move(mat)),
          heights(static_cast<std::size_t>(rows_) * cols_, 0.0),
          intensity(static_cast<std::size_t>(rows_) * cols_, 0.0) {
        if (rows < 1 || cols < 1) throw sim_error("tray dimensions must be positive");
        if (!(cell_size_mm > 0.0)) throw sim_error("cell size must be positive");
        material.validate();
    }

    std::size_t idx(int y, int x) const { return static_cast<std::size_t>(y) * cols + x; }
    double& h(int y, int x) { return heights[idx(y, x)]; }
    double h(int y, int x) const { return heights[idx(y, x)]; }
    bool in_bounds(int y, int x) const { return y >= 0 && y < rows && x >= 0 && x < cols; }

    double cell_area_mm2() const { return cell_size_mm * cell_size_mm; }
};

/// Total grams on the tray: density_scale [g/cm^3] times the heightfield
/// volume. Pure function of (heights, material, cell size).
inline double total_mass_g(const Tray& tray) {
    double sum_h = 0.0;
    for (double v : tray.heights) sum_h += v;
    const double volume_cm3 = sum_h * tray.cell_area_mm2() / 1000.0;
    return tray.material.density_scale * volume_cm3;
}

namespace detail {

// Static per-cell texture noise so intensity is a pure function of the
// heightfield and the cell position.
inline double cell_hash01(int y, int x) {
    std::uint64_t s = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(y)) << 32) |
                      static_cast<std::uint32_t>(x);
    s ^= 0x9e3779b97f4a7c15ull;
    return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Recompute the appearance channel from the current heights, over a cell
/// rectangle (inclusive, clipped to the grid). Brighter where the surface is
/// steeper, with a fixed speckle so flat regions still carry texture the
/// networks can latch onto.
inline void update_intensity(Tray& tray, int x0, int y0, int x1, int y1) {
    const double scale = 2.0 * tray.material.repose_slope;
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, tray.cols - 1);
    y1 = std::min(y1, tray.rows - 1);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const int xl = std::max(x - 1, 0), xr = std::min(x + 1, tray.cols - 1);
            const int yu = std::max(y - 1, 0), yd = std::min(y + 1, tray.rows - 1);
            const double gx = (tray.h(y, xr) - tray.h(y, xl)) / (xr - xl == 0 ? 1 : xr - xl);
            const double gy = (tray.h(yd, x) - tray.h(yu, x)) / (yd - yu == 0 ? 1 : yd - yu);
            const double grad = std::sqrt(gx * gx + gy * gy);
            const double g = std::min(grad / scale, 1.0);
            const double v = 0.15 + 0.60 * g + 0.25 * detail::cell_hash01(y, x);
            tray.intensity[tray.idx(y, x)] = std::clamp(v, 0.0, 1.0);
        }
    }
}

inline void update_intensity(Tray& tray) {
    update_intensity(tray, 0, 0, tray.cols - 1, tray.rows - 1);
}

}  // namespace grainpick
