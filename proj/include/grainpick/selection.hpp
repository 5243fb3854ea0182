#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "grainpick/config.hpp"
#include "grainpick/errors.hpp"
#include "grainpick/estimators.hpp"
#include "grainpick/patch.hpp"
#include "grainpick/rng.hpp"
#include "grainpick/tray.hpp"

namespace grainpick {

struct GridPoint {
    int x = 0;
    int y = 0;
    bool operator==(const GridPoint&) const = default;
};

/// One scored grasp candidate: where, the predicted grams, and (for the
/// uncertainty policies) the uncertainty score.
struct CandidateEvaluation {
    int x = 0;
    int y = 0;
    double predicted_mass_g = 0.0;
    std::optional<double> uncertainty;
};

enum class PolicyTag { random, baseline, ee, rnd };

inline std::string to_string(PolicyTag t) {
    switch (t) {
        case PolicyTag::random: return "random";
        case PolicyTag::baseline: return "baseline";
        case PolicyTag::ee: return "ee";
        case PolicyTag::rnd: return "rnd";
    }
    return "?";
}

inline PolicyTag policy_from_string(const std::string& s) {
    if (s == "random") return PolicyTag::random;
    if (s == "baseline") return PolicyTag::baseline;
    if (s == "ee") return PolicyTag::ee;
    if (s == "rnd") return PolicyTag::rnd;
    throw config_error("unknown policy '" + s + "'");
}

struct SelectionPolicy {
    PolicyTag tag = PolicyTag::baseline;
    double band_g = 0.5;

    void validate() const {
        if (!(band_g > 0.0)) throw config_error("selection band must be > 0");
    }
};

/// Equidistant nx x ny lattice over the margin-shrunk tray interior. Spacing
/// is a whole number of cells per axis and the lattice is centered in the
/// usable area.
inline std::vector<GridPoint> candidate_grid(const Tray& tray, int nx, int ny, int patch_cells) {
    if (nx < 1 || ny < 1) throw sim_error("candidate grid needs nx, ny >= 1");
    const int margin = patch_cells / 2;
    const int span_x = (tray.cols - 1 - margin) - margin;
    const int span_y = (tray.rows - 1 - margin) - margin;
    if (span_x < 0 || span_y < 0) throw sim_error("tray too small for the patch margin");
    const int step_x = nx == 1 ? 0 : span_x / (nx - 1);
    const int step_y = ny == 1 ? 0 : span_y / (ny - 1);
    if ((nx > 1 && step_x < 1) || (ny > 1 && step_y < 1))
        throw sim_error("candidate grid does not fit inside the tray margin");
    const int x0 = margin + (span_x - step_x * (nx - 1)) / 2;
    const int y0 = margin + (span_y - step_y * (ny - 1)) / 2;

    std::vector<GridPoint> pts;
    pts.reserve(static_cast<std::size_t>(nx) * ny);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            pts.push_back({x0 + ix * step_x, y0 + iy * step_y});
    return pts;
}

/// Optional uncertainty source for evaluate_candidates.
using UncertaintyFn = std::function<double(const Patch&)>;

inline UncertaintyFn uncertainty_source(const ErrorEstimator& ee) {
    return [&ee](const Patch& p) { return uncertainty_ee(ee, p); };
}

inline UncertaintyFn uncertainty_source(const RndPair& rnd) {
    return [&rnd](const Patch& p) { return uncertainty_rnd(rnd, p); };
}

/// Score every point: crop, predict mass, optionally score uncertainty.
/// Read-only on the tray; order of results matches the input points. Work is
/// split across threads when n_threads > 1, with identical results either way.
inline std::vector<CandidateEvaluation> evaluate_candidates(
    const Tray& tray, const std::vector<GridPoint>& points, const MassEstimator& mass_est,
    const UncertaintyFn& uncertainty = nullptr, int patch_cells = 30, int n_threads = 1) {
    std::vector<CandidateEvaluation> evals(points.size());

    auto run_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Patch patch = crop_patch(tray, points[i].x, points[i].y, patch_cells);
            CandidateEvaluation& e = evals[i];
            e.x = points[i].x;
            e.y = points[i].y;
            e.predicted_mass_g = predict_mass(mass_est, patch);
            if (uncertainty) e.uncertainty = uncertainty(patch);
        }
    };

    if (n_threads <= 1 || points.size() < 64) {
        run_range(0, points.size());
        return evals;
    }
    std::vector<std::thread> workers;
    const std::size_t chunk = (points.size() + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
        const std::size_t b = std::min(points.size(), t * chunk);
        const std::size_t e = std::min(points.size(), b + chunk);
        if (b < e) workers.emplace_back(run_range, b, e);
    }
    for (auto& w : workers) w.join();
    return evals;
}

namespace detail {

// Lexicographic (y, x) order breaks ties between equal scores.
inline bool coord_before(const CandidateEvaluation& a, const CandidateEvaluation& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
}

inline const CandidateEvaluation& argmin_mass_distance(
    const std::vector<CandidateEvaluation>& evals, double target_g) {
    const CandidateEvaluation* best = &evals[0];
    double best_d = std::abs(evals[0].predicted_mass_g - target_g);
    for (const auto& e : evals) {
        const double d = std::abs(e.predicted_mass_g - target_g);
        if (d < best_d || (d == best_d && coord_before(e, *best))) {
            best = &e;
            best_d = d;
        }
    }
    return *best;
}

}  // namespace detail

/// Pick the grasp point for a target mass.
///   random:   uniform over all candidates, predictions ignored.
///   baseline: prediction closest to the target.
///   ee/rnd:   two-stage rule; among candidates within +-band_g of the
///             target, the one with the lowest uncertainty. When the band is
///             empty the policy degrades to baseline.
inline CandidateEvaluation select(const SelectionPolicy& policy,
                                  const std::vector<CandidateEvaluation>& evals, double target_g,
                                  Rng& rng) {
    if (evals.empty()) throw model_error("select: no candidates to choose from");
    policy.validate();

    switch (policy.tag) {
        case PolicyTag::random:
            return evals[rng.uniform_int(static_cast<int>(evals.size()))];
        case PolicyTag::baseline:
            return detail::argmin_mass_distance(evals, target_g);
        case PolicyTag::ee:
        case PolicyTag::rnd: {
            const CandidateEvaluation* best = nullptr;
            for (const auto& e : evals) {
                if (std::abs(e.predicted_mass_g - target_g) > policy.band_g) continue;
                if (!e.uncertainty)
                    throw model_error("select: uncertainty policy needs uncertainty scores");
                if (!best || *e.uncertainty < *best->uncertainty ||
                    (*e.uncertainty == *best->uncertainty && detail::coord_before(e, *best)))
                    best = &e;
            }
            if (best) return *best;
            return detail::argmin_mass_distance(evals, target_g);
        }
    }
    throw model_error("select: unreachable policy tag");
}

}  // namespace grainpick
