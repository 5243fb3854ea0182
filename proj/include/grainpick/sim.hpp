#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "grainpick/config.hpp"
#include "grainpick/dataset.hpp"
#include "grainpick/errors.hpp"
#include "grainpick/patch.hpp"
#include "grainpick/rng.hpp"
#include "grainpick/tray.hpp"

namespace grainpick {

struct CellRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounds

    bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
    int cell_count() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
};

/// Result of one grasp: mass in the gripper (pre-quantization), mass lost to
/// breakage/spill, and the cells the fingers touched.
struct GraspOutcome {
    double mass_g = 0.0;
    double spilled_g = 0.0;
    CellRect footprint;
};

struct SettleReport {
    int sweeps = 0;
    bool converged = true;
};

/// Max adjacent height step, scanned exhaustively over the full grid.
inline double max_adjacent_step(const Tray& tray) {
    double worst = 0.0;
    for (int y = 0; y < tray.rows; ++y)
        for (int x = 0; x < tray.cols; ++x) {
            if (x + 1 < tray.cols)
                worst = std::max(worst, std::abs(tray.h(y, x) - tray.h(y, x + 1)));
            if (y + 1 < tray.rows)
                worst = std::max(worst, std::abs(tray.h(y, x) - tray.h(y + 1, x)));
        }
    return worst;
}

inline bool repose_stable(const Tray& tray, double tol = 1e-9) {
    return max_adjacent_step(tray) <= tray.material.repose_slope + tol;
}

/// Relax the heightfield until no adjacent pair exceeds the repose slope (or
/// the sweep cap is reached). Each transfer moves half the excess, which
/// brings that pair back to the slope; mass only moves between cells and is
/// never created or destroyed. The sweep window starts at the given rectangle
/// and follows the disturbance, so a local crater or mound costs work
/// proportional to its extent, not to the tray.
inline SettleReport settle_region(Tray& tray, int rx0, int ry0, int rx1, int ry1,
                                  int max_sweeps = 1000) {
    const double slope = tray.material.repose_slope;
    // slack keeps pairs relaxed to exactly the slope from re-triggering at
    // ulp scale
    const double trigger = slope + 1e-10 * std::max(1.0, slope);
    int x0 = std::max(rx0 - 1, 0), y0 = std::max(ry0 - 1, 0);
    int x1 = std::min(rx1 + 1, tray.cols - 1), y1 = std::min(ry1 + 1, tray.rows - 1);
    int ix0 = x0, iy0 = y0, ix1 = x1, iy1 = y1;  // union of touched cells, for intensity

    SettleReport rep;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        rep.sweeps = sweep + 1;
        bool moved = false;
        int mx0 = tray.cols, my0 = tray.rows, mx1 = -1, my1 = -1;
        auto note = [&](int y, int xa, int xb) {
            moved = true;
            mx0 = std::min(mx0, xa);
            mx1 = std::max(mx1, xb);
            my0 = std::min(my0, y);
            my1 = std::max(my1, y);
        };
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const std::size_t i = tray.idx(y, x);
                if (x + 1 < tray.cols) {
                    const double d = tray.heights[i] - tray.heights[i + 1];
                    if (d > trigger) {
                        const double t = 0.5 * (d - slope);
                        tray.heights[i] -= t;
                        tray.heights[i + 1] += t;
                        note(y, x, x + 1);
                    } else if (-d > trigger) {
                        const double t = 0.5 * (-d - slope);
                        tray.heights[i + 1] -= t;
                        tray.heights[i] += t;
                        note(y, x, x + 1);
                    }
                }
                if (y + 1 < tray.rows) {
                    const std::size_t j = i + tray.cols;
                    const double d = tray.heights[i] - tray.heights[j];
                    if (d > trigger) {
                        const double t = 0.5 * (d - slope);
                        tray.heights[i] -= t;
                        tray.heights[j] += t;
                        note(y, x, x);
                        my1 = std::max(my1, y + 1);
                    } else if (-d > trigger) {
                        const double t = 0.5 * (-d - slope);
                        tray.heights[j] -= t;
                        tray.heights[i] += t;
                        note(y, x, x);
                        my1 = std::max(my1, y + 1);
                    }
                }
            }
        }
        if (!moved) {
            update_intensity(tray, ix0 - 1, iy0 - 1, ix1 + 1, iy1 + 1);
            return rep;
        }
        // next window: every modified cell plus one ring, so pairs crossing
        // the old window boundary are re-checked
        x0 = std::max(mx0 - 1, 0);
        y0 = std::max(my0 - 1, 0);
        x1 = std::min(mx1 + 1, tray.cols - 1);
        y1 = std::min(my1 + 1, tray.rows - 1);
        ix0 = std::min(ix0, x0);
        iy0 = std::min(iy0, y0);
        ix1 = std::max(ix1, x1);
        iy1 = std::max(iy1, y1);
    }
    rep.converged = repose_stable(tray, 1e-9 * std::max(1.0, slope));
    update_intensity(tray, ix0 - 1, iy0 - 1, ix1 + 1, iy1 + 1);
    return rep;
}

inline SettleReport settle(Tray& tray, int max_sweeps = 1000) {
    return settle_region(tray, 0, 0, tray.cols - 1, tray.rows - 1, max_sweeps);
}

namespace detail {

// Smooth value noise in [-1, 1]: a few octaves of bilinearly interpolated
// random lattices.
inline std::vector<double> value_noise(int rows, int cols, Rng& rng) {
    std::vector<double> field(static_cast<std::size_t>(rows) * cols, 0.0);
    double amp_total = 0.0;
    for (int octave = 0; octave < 3; ++octave) {
        const int step = std::max(2, 16 >> octave);
        const double amp = 1.0 / (1 << octave);
        amp_total += amp;
        const int lr = rows / step + 2;
        const int lc = cols / step + 2;
        std::vector<double> lattice(static_cast<std::size_t>(lr) * lc);
        for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
        for (int y = 0; y < rows; ++y) {
            const double fy = static_cast<double>(y) / step;
            const int iy = static_cast<int>(fy);
            const double ty = fy - iy;
            for (int x = 0; x < cols; ++x) {
                const double fx = static_cast<double>(x) / step;
                const int ix = static_cast<int>(fx);
                const double tx = fx - ix;
                const double a = lattice[static_cast<std::size_t>(iy) * lc + ix];
                const double b = lattice[static_cast<std::size_t>(iy) * lc + ix + 1];
                const double c = lattice[static_cast<std::size_t>(iy + 1) * lc + ix];
                const double d = lattice[static_cast<std::size_t>(iy + 1) * lc + ix + 1];
                const double v = (a * (1 - tx) + b * tx) * (1 - ty) +
                                 (c * (1 - tx) + d * tx) * ty;
                field[static_cast<std::size_t>(y) * cols + x] += amp * v;
            }
        }
    }
    for (auto& v : field) v /= amp_total;
    return field;
}

}  // namespace detail

inline CellRect gripper_footprint(const ExperimentConfig& cfg, int x, int y) {
    CellRect r;
    r.x0 = x - cfg.gripper_cols / 2;
    r.x1 = r.x0 + cfg.gripper_cols - 1;
    r.y0 = y - cfg.gripper_rows / 2;
    r.y1 = r.y0 + cfg.gripper_rows - 1;
    return r;
}

/// Grasp at (x, y): the fingers close insertion_depth_mm below the surface
/// height at the grasp point and capture the material above that plane inside
/// the footprint. Material the gripper displaces but does not hold is pushed
/// onto the ring of cells around the footprint; breakage losses leave the
/// tray entirely and are reported in spilled_g.
inline GraspOutcome grasp_at(const ExperimentConfig& cfg, Tray& tray, int x, int y, Rng& rng) {
    const int margin = cfg.patch_margin_cells();
    if (x < margin || y < margin || x > tray.cols - 1 - margin || y > tray.rows - 1 - margin)
        throw sim_error("grasp point (" + std::to_string(x) + ", " + std::to_string(y) +
                        ") violates the patch margin");
    if (!(tray.h(y, x) > 0.0))
        throw sim_error("grasp point has empty surface");

    const CellRect fp = gripper_footprint(cfg, x, y);
    const double z0 = tray.h(y, x) - cfg.insertion_depth_mm;
    const double plane = std::max(z0, 0.0);

    double captured_mm3 = 0.0;
    for (int yy = fp.y0; yy <= fp.y1; ++yy)
        for (int xx = fp.x0; xx <= fp.x1; ++xx)
            captured_mm3 += std::max(0.0, tray.h(yy, xx) - plane) * tray.cell_area_mm2();

    const MaterialParams& mat = tray.material;
    const double removed_g = mat.density_scale * captured_mm3 / 1000.0;
    const double deterministic_g = std::min(removed_g * mat.compress_factor, mat.capacity_g);
    double grasped_g = std::min(deterministic_g * rng.lognormal_mean1(mat.noise_cv), removed_g);

    double spilled_g = 0.0;
    if (mat.breakage_prob > 0.0 && rng.bernoulli(mat.breakage_prob)) {
        const double frac = 0.5 * rng.uniform();
        spilled_g = grasped_g * frac;
        grasped_g -= spilled_g;
    }

    for (int yy = fp.y0; yy <= fp.y1; ++yy)
        for (int xx = fp.x0; xx <= fp.x1; ++xx)
            tray.h(yy, xx) = std::min(tray.h(yy, xx), plane);

    // Displaced-but-not-held material lands on the two-cell ring around the
    // footprint and stays in the tray.
    const double pushed_g = removed_g - grasped_g - spilled_g;
    if (pushed_g > 0.0) {
        std::vector<std::size_t> ring;
        for (int yy = fp.y0 - 2; yy <= fp.y1 + 2; ++yy)
            for (int xx = fp.x0 - 2; xx <= fp.x1 + 2; ++xx)
                if (tray.in_bounds(yy, xx) && !fp.contains(xx, yy))
                    ring.push_back(tray.idx(yy, xx));
        const double per_cell_mm =
            pushed_g / mat.density_scale * 1000.0 / (tray.cell_area_mm2() * ring.size());
        for (std::size_t i : ring) tray.heights[i] += per_cell_mm;
    }

    update_intensity(tray, fp.x0 - 3, fp.y0 - 3, fp.x1 + 3, fp.y1 + 3);

    GraspOutcome out;
    out.mass_g = grasped_g;
    out.spilled_g = spilled_g;
    out.footprint = fp;
    return out;
}

/// Drop mass_g as a Gaussian mound centered at (x, y), then let it settle.
/// The mound is normalized so the added mass is exact; the rng only jitters
/// its spread.
inline void place_at(const ExperimentConfig& cfg, Tray& tray, int x, int y, double mass_g,
                     Rng& rng) {
    if (mass_g < 0.0) throw sim_error("cannot place negative mass");
    if (!tray.in_bounds(y, x))
        throw sim_error("place point (" + std::to_string(x) + ", " + std::to_string(y) +
                        ") out of tray bounds");
    if (mass_g == 0.0) return;

    const double sigma = cfg.mound_sigma_cells * rng.uniform(0.8, 1.2);
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));

    std::vector<std::pair<std::size_t, double>> kernel;
    double wsum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (!tray.in_bounds(yy, xx)) continue;
            const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            kernel.emplace_back(tray.idx(yy, xx), w);
            wsum += w;
        }

    const double volume_mm3 = mass_g / tray.material.density_scale * 1000.0;
    for (const auto& [i, w] : kernel)
        tray.heights[i] += volume_mm3 * (w / wsum) / tray.cell_area_mm2();

    settle_region(tray, x - radius, y - radius, x + radius, y + radius, cfg.settle_max_sweeps);
}

/// Build a repose-stable random surface holding fill_mass_g of material (to
/// within the 1 g scale resolution). The surface is then worked over by
/// pick-and-drop-back cycles so a fresh tray starts with the same texture a
/// continuously used one has, rather than an artificially smooth one.
inline Tray init_tray(const ExperimentConfig& cfg, const MaterialParams& material,
                      double fill_mass_g, std::uint64_t seed) {
    if (fill_mass_g < 0.0) throw sim_error("fill mass must be >= 0");
    Tray tray(cfg.tray_rows, cfg.tray_cols, cfg.cell_size_mm, material);

    const double target_volume_mm3 = fill_mass_g / material.density_scale * 1000.0;
    const double mean_height = target_volume_mm3 / (tray.cell_area_mm2() * tray.rows * tray.cols);
    const double tray_capacity_mm = 0.85 * cfg.tray_depth_mm;
    if (mean_height * (1.0 + cfg.init_roughness) > tray_capacity_mm)
        throw sim_error("fill mass exceeds tray capacity for material '" + material.name + "'");

    if (fill_mass_g == 0.0) {
        update_intensity(tray);
        return tray;
    }

    Rng rng(derive_seed(seed, "init_tray"));
    const auto noise = detail::value_noise(tray.rows, tray.cols, rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < tray.heights.size(); ++i) {
        tray.heights[i] = std::max(0.0, mean_height * (1.0 + cfg.init_roughness * noise[i]));
        sum += tray.heights[i];
    }
    const double target_sum = target_volume_mm3 / tray.cell_area_mm2();
    const double scale = sum > 0.0 ? target_sum / sum : 0.0;
    for (auto& h : tray.heights) h *= scale;
    settle(tray, cfg.settle_max_sweeps);

    const int footprint_cells = cfg.gripper_cols * cfg.gripper_rows;
    const int warmup = static_cast<int>(cfg.init_warmup_coverage * tray.rows * tray.cols /
                                        footprint_cells);
    const int margin = cfg.patch_margin_cells();
    for (int i = 0; i < warmup; ++i) {
        const int gx = margin + rng.uniform_int(tray.cols - 2 * margin);
        const int gy = margin + rng.uniform_int(tray.rows - 2 * margin);
        if (!(tray.h(gy, gx) > 0.0)) continue;
        GraspOutcome out = grasp_at(cfg, tray, gx, gy, rng);
        settle_region(tray, out.footprint.x0 - 1, out.footprint.y0 - 1, out.footprint.x1 + 1,
                      out.footprint.y1 + 1, cfg.settle_max_sweeps);
        const int px = margin + rng.uniform_int(tray.cols - 2 * margin);
        const int py = margin + rng.uniform_int(tray.rows - 2 * margin);
        // everything goes back in, spill included, so the fill stays exact
        place_at(cfg, tray, px, py, out.mass_g + out.spilled_g, rng);
    }
    return tray;
}

/// The two-tray pick-and-place process. The pick tray starts as the heavier
/// one and direction switches once its mass drops under the threshold.
struct CollectionState {
    Tray tray_a;
    Tray tray_b;
    bool pick_is_a = true;
    long iteration = 0;
    double spilled_total_g = 0.0;
    double switch_threshold_g = 0.0;
    Rng rng;

    CollectionState(Tray a, Tray b, double threshold, Rng r)
        : tray_a(std::move(a)), tray_b(std::move(b)), switch_threshold_g(threshold),
          rng(std::move(r)) {
        pick_is_a = total_mass_g(tray_a) >= total_mass_g(tray_b);
    }

    Tray& pick_tray() { return pick_is_a ? tray_a : tray_b; }
    Tray& place_tray() { return pick_is_a ? tray_b : tray_a; }
    const Tray& pick_tray() const { return pick_is_a ? tray_a : tray_b; }

    /// Switch direction once the pick tray runs low, as long as the other
    /// tray actually holds more. Idempotent between grasps.
    void maybe_switch() {
        const double pick_mass = total_mass_g(pick_tray());
        if (pick_mass < switch_threshold_g && total_mass_g(place_tray()) > pick_mass)
            pick_is_a = !pick_is_a;
    }
};

inline CollectionState make_collection_state(const ExperimentConfig& cfg,
                                             const MaterialPreset& preset, std::uint64_t seed) {
    const double eps = cfg.eps_fill_fraction * preset.fill_mass_g;
    if (eps >= preset.fill_mass_g)
        throw sim_error("tray-switch threshold (" + std::to_string(eps) +
                        " g) must be below the initial fill (" +
                        std::to_string(preset.fill_mass_g) + " g)");
    Tray a = init_tray(cfg, preset.params, preset.fill_mass_g, derive_seed(seed, "tray_a"));
    Tray b = init_tray(cfg, preset.params, 0.5 * preset.fill_mass_g, derive_seed(seed, "tray_b"));
    return CollectionState(std::move(a), std::move(b), eps, Rng(derive_seed(seed, "collect")));
}

struct CycleResult {
    Patch patch;        // cropped strictly before the grasp
    GraspOutcome outcome;
    double mass_quantized_g = 0.0;
    int x = 0, y = 0;
};

namespace detail {

inline std::pair<int, int> random_margin_point(const ExperimentConfig& cfg, const Tray& tray,
                                               Rng& rng) {
    const int margin = cfg.patch_margin_cells();
    const int x = margin + rng.uniform_int(tray.cols - 2 * margin);
    const int y = margin + rng.uniform_int(tray.rows - 2 * margin);
    return {x, y};
}

}  // namespace detail

/// One pick-place cycle. If grasp_xy is absent the grasp point is uniformly
/// random within the margin-shrunk pick tray (the data collection policy);
/// otherwise the given point is used (the evaluation policies).
inline CycleResult pick_place_cycle(const ExperimentConfig& cfg, CollectionState& st,
                                    std::optional<std::pair<int, int>> grasp_xy = std::nullopt) {
    st.maybe_switch();
    Tray& pick = st.pick_tray();

    int x, y;
    if (grasp_xy) {
        x = grasp_xy->first;
        y = grasp_xy->second;
    } else {
        auto [rx, ry] = detail::random_margin_point(cfg, pick, st.rng);
        x = rx;
        y = ry;
        for (int tries = 0; !(pick.h(y, x) > 0.0) && tries < 256; ++tries) {
            auto [nx, ny] = detail::random_margin_point(cfg, pick, st.rng);
            x = nx;
            y = ny;
        }
    }

    CycleResult res;
    res.x = x;
    res.y = y;
    res.patch = crop_patch(pick, x, y, cfg.patch_cells);
    res.outcome = grasp_at(cfg, pick, x, y, st.rng);
    settle_region(pick, res.outcome.footprint.x0 - 1, res.outcome.footprint.y0 - 1,
                  res.outcome.footprint.x1 + 1, res.outcome.footprint.y1 + 1,
                  cfg.settle_max_sweeps);
    st.spilled_total_g += res.outcome.spilled_g;
    res.mass_quantized_g = quantize_mass(res.outcome.mass_g, cfg.scale_resolution_g);

    Tray& place = st.place_tray();
    auto [px, py] = detail::random_margin_point(cfg, place, st.rng);
    place_at(cfg, place, px, py, res.outcome.mass_g, st.rng);

    ++st.iteration;
    return res;
}

/// Autonomous data collection: n_iters random pick-place cycles, labels
/// quantized to the scale resolution.
inline Dataset collect(const ExperimentConfig& cfg, const std::string& material_name,
                       int n_iters, std::uint64_t seed) {
    if (n_iters < 1) throw sim_error("collect requires n_iters >= 1");
    const MaterialPreset& preset = cfg.preset(material_name);
    CollectionState st = make_collection_state(cfg, preset, seed);

    Dataset ds;
    ds.material_name = material_name;
    ds.seed = seed;
    ds.records.reserve(n_iters);
    for (int i = 0; i < n_iters; ++i) {
        CycleResult cr = pick_place_cycle(cfg, st);
        ds.records.push_back({std::move(cr.patch), static_cast<float>(cr.mass_quantized_g)});
    }
    return ds;
}

}  // namespace grainpick
