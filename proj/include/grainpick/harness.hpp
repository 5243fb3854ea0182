#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "grainpick/config.hpp"
#include "grainpick/errors.hpp"
#include "grainpick/estimators.hpp"
#include "grainpick/selection.hpp"
#include "grainpick/sim.hpp"

namespace grainpick {

/// Success criterion: the grasped mass is within tol (a fraction) of the
/// target. Exact fractional test, no gram rounding.
inline bool is_success(double grasped_g, double target_g, double tol) {
    if (!(target_g > 0.0)) throw config_error("is_success: target mass must be > 0");
    if (!(tol > 0.0)) throw config_error("is_success: tolerance must be > 0");
    return std::abs(grasped_g - target_g) / target_g <= tol;
}

/// One evaluation sweep: which material, dataset sizes, policies, targets and
/// seeds to run. Empty targets_g means "derive from the size-1000 training
/// labels" (mean - std, mean, mean + std, rounded to the scale resolution).
struct EvalCampaign {
    std::string material;
    std::vector<int> sizes = {50, 100, 200, 500, 1000};
    std::vector<PolicyTag> policies = {PolicyTag::random, PolicyTag::baseline, PolicyTag::ee,
                                       PolicyTag::rnd};
    std::vector<double> targets_g;  // empty = derive
    std::vector<double> tolerances = {0.05, 0.10};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    int attempts = 50;
    int n_workers = 0;  // 0 = hardware concurrency

    void validate() const {
        if (material.empty()) throw config_error("campaign material must be set");
        if (sizes.empty()) throw config_error("campaign sizes must be non-empty");
        if (policies.empty()) throw config_error("campaign policies must be non-empty");
        if (tolerances.empty()) throw config_error("campaign tolerances must be non-empty");
        if (seeds.empty()) throw config_error("campaign seeds must be non-empty");
        if (attempts < 1) throw config_error("campaign attempts must be >= 1");
        for (double t : targets_g)
            if (!(t > 0.0)) throw config_error("campaign targets must be > 0");
    }
};

/// One aggregated cell of the results table.
struct SuccessRow {
    std::string material;
    int size = 0;
    std::string policy;
    double target_g = 0.0;
    double tol = 0.0;
    int attempts = 0;
    int successes = 0;
    double mean_abs_err_g = 0.0;

    double rate() const { return static_cast<double>(successes) / attempts; }
};

struct SuccessTable {
    std::vector<SuccessRow> rows;

    const SuccessRow* find(const std::string& material, int size, const std::string& policy,
                           double target_g, double tol) const {
        for (const auto& r : rows)
            if (r.material == material && r.size == size && r.policy == policy &&
                r.target_g == target_g && r.tol == tol)
                return &r;
        return nullptr;
    }

    /// Mean success rate of a policy across targets (and seeds, which are
    /// already pooled into attempts) for one (size, tol).
    double mean_rate(const std::string& material, int size, const std::string& policy,
                     double tol) const {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : rows)
            if (r.material == material && r.size == size && r.policy == policy && r.tol == tol) {
                sum += r.rate();
                ++n;
            }
        return n > 0 ? sum / n : 0.0;
    }

    bool operator==(const SuccessTable& o) const;
};

namespace detail {

inline int policy_order(const std::string& p) {
    if (p == "random") return 0;
    if (p == "baseline") return 1;
    if (p == "ee") return 2;
    return 3;
}

inline void sort_rows(std::vector<SuccessRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const SuccessRow& a, const SuccessRow& b) {
        if (a.material != b.material) return a.material < b.material;
        if (a.size != b.size) return a.size < b.size;
        if (policy_order(a.policy) != policy_order(b.policy))
            return policy_order(a.policy) < policy_order(b.policy);
        if (a.target_g != b.target_g) return a.target_g < b.target_g;
        return a.tol < b.tol;
    });
}

}  // namespace detail

inline bool SuccessTable::operator==(const SuccessTable& o) const {
    auto key_eq = [](const SuccessRow& a, const SuccessRow& b) {
        return a.material == b.material && a.size == b.size && a.policy == b.policy &&
               a.target_g == b.target_g && a.tol == b.tol && a.attempts == b.attempts &&
               a.successes == b.successes && a.mean_abs_err_g == b.mean_abs_err_g;
    };
    if (rows.size() != o.rows.size()) return false;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (!key_eq(rows[i], o.rows[i])) return false;
    return true;
}

/// Targets per the evaluation protocol: mean - std, mean, mean + std of the
/// grasped-mass labels, rounded to the scale resolution.
inline std::vector<double> derive_targets(const std::vector<float>& labels_g,
                                          double resolution_g) {
    if (labels_g.empty()) throw config_error("cannot derive targets from an empty label set");
    double mean = 0.0;
    for (float v : labels_g) mean += v;
    mean /= static_cast<double>(labels_g.size());
    double var = 0.0;
    for (float v : labels_g) var += (v - mean) * (v - mean);
    var /= static_cast<double>(labels_g.size());
    const double stddev = std::sqrt(var);
    std::vector<double> targets;
    for (double t : {mean - stddev, mean, mean + stddev})
        targets.push_back(std::max(resolution_g, quantize_mass(t, resolution_g)));
    return targets;
}

namespace detail {

inline std::vector<GridPoint> graspable_points(const ExperimentConfig& cfg, const Tray& tray) {
    std::vector<GridPoint> pts = candidate_grid(tray, cfg.grid_nx, cfg.grid_ny, cfg.patch_cells);
    std::erase_if(pts, [&](const GridPoint& p) { return !(tray.h(p.y, p.x) > 0.0); });
    if (pts.empty()) throw sim_error("no graspable candidate points left on the pick tray");
    return pts;
}

}  // namespace detail

/// Attempt `attempts` grasps of target_g with one policy inside a fresh
/// two-tray process, and aggregate successes per tolerance. The random policy
/// never consults the models, matching its role as the null hypothesis.
inline std::vector<SuccessRow> evaluate_policy(const ExperimentConfig& cfg,
                                               const std::string& material,
                                               const ModelBundle& bundle, PolicyTag policy,
                                               double target_g, int attempts,
                                               const std::vector<double>& tolerances,
                                               std::uint64_t seed, int size_label,
                                               int eval_threads = 1) {
    const MaterialPreset& preset = cfg.preset(material);
    CollectionState st = make_collection_state(cfg, preset, seed);
    SelectionPolicy sel{policy, cfg.band_g};

    UncertaintyFn unc;
    if (policy == PolicyTag::ee) unc = uncertainty_source(bundle.ee);
    if (policy == PolicyTag::rnd) unc = uncertainty_source(bundle.rnd);

    std::vector<int> successes(tolerances.size(), 0);
    double abs_err_sum = 0.0;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        st.maybe_switch();
        const Tray& pick = st.pick_tray();
        const std::vector<GridPoint> pts = detail::graspable_points(cfg, pick);

        std::vector<CandidateEvaluation> evals;
        if (policy == PolicyTag::random) {
            evals.resize(pts.size());
            for (std::size_t i = 0; i < pts.size(); ++i)
                evals[i] = {pts[i].x, pts[i].y, 0.0, std::nullopt};
        } else {
            evals = evaluate_candidates(pick, pts, bundle.mass, unc, cfg.patch_cells,
                                        eval_threads);
        }
        const CandidateEvaluation chosen = select(sel, evals, target_g, st.rng);
        const CycleResult cr = pick_place_cycle(cfg, st, {{chosen.x, chosen.y}});

        abs_err_sum += std::abs(cr.mass_quantized_g - target_g);
        for (std::size_t t = 0; t < tolerances.size(); ++t)
            if (is_success(cr.mass_quantized_g, target_g, tolerances[t])) ++successes[t];
    }

    std::vector<SuccessRow> rows;
    for (std::size_t t = 0; t < tolerances.size(); ++t) {
        SuccessRow r;
        r.material = material;
        r.size = size_label;
        r.policy = to_string(policy);
        r.target_g = target_g;
        r.tol = tolerances[t];
        r.attempts = attempts;
        r.successes = successes[t];
        r.mean_abs_err_g = abs_err_sum / attempts;
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Full sweep: per (seed, size) collect a prefix dataset, train the bundle,
/// then run every (policy, target) cell. Seeds are pooled into the attempt
/// counts so a row aggregates seeds x attempts grasps.
inline SuccessTable run_campaign(const EvalCampaign& campaign, const ExperimentConfig& cfg) {
    campaign.validate();
    cfg.validate();
    const MaterialPreset& preset = cfg.preset(campaign.material);
    const int max_size = *std::max_element(campaign.sizes.begin(), campaign.sizes.end());
    const bool derive = campaign.targets_g.empty();
    const int collect_n = std::max(max_size, derive ? 1000 : 0);
    const int n_workers = campaign.n_workers > 0
                              ? campaign.n_workers
                              : std::max(1u, std::thread::hardware_concurrency());

    struct CellJob {
        std::uint64_t seed;
        int size;
    };
    std::vector<CellJob> jobs;
    for (std::uint64_t seed : campaign.seeds)
        for (int size : campaign.sizes) jobs.push_back({seed, size});

    // rows per job, later merged in fixed job order
    std::vector<std::vector<SuccessRow>> job_rows(jobs.size());

    auto run_job = [&](std::size_t ji) {
        const CellJob& job = jobs[ji];
        Dataset full = collect(cfg, campaign.material, collect_n, job.seed);
        std::vector<double> targets = campaign.targets_g;
        if (derive) {
            std::vector<float> labels;
            labels.reserve(1000);
            for (std::size_t i = 0; i < std::min<std::size_t>(1000, full.size()); ++i)
                labels.push_back(full.records[i].mass_g);
            targets = derive_targets(labels, cfg.scale_resolution_g);
        }
        const Dataset ds = full.prefix(job.size);
        const ModelBundle bundle =
            train_bundle(ds, cfg, derive_seed(job.seed, "bundle", job.size));
        const int attempts = job.size <= 100 ? std::max(campaign.attempts, preset.attempts_small)
                                             : campaign.attempts;
        for (PolicyTag policy : campaign.policies) {
            for (std::size_t ti = 0; ti < targets.size(); ++ti) {
                auto rows = evaluate_policy(
                    cfg, campaign.material, bundle, policy, targets[ti], attempts,
                    campaign.tolerances,
                    derive_seed(job.seed, "eval_" + to_string(policy), job.size * 16 + ti),
                    job.size);
                for (auto& r : rows) job_rows[ji].push_back(std::move(r));
            }
        }
    };

    // cells are independent; distribute them over a small worker pool
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t ji = next.fetch_add(1);
            if (ji >= jobs.size()) return;
            try {
                run_job(ji);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(n_workers, static_cast<int>(jobs.size())); ++t)
        pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    // pool seeds: sum successes/attempts for identical (size, policy, target, tol)
    std::map<std::tuple<std::string, int, std::string, double, double>, SuccessRow> merged;
    for (const auto& rows : job_rows)
        for (const auto& r : rows) {
            auto key = std::make_tuple(r.material, r.size, r.policy, r.target_g, r.tol);
            auto it = merged.find(key);
            if (it == merged.end()) {
                merged.emplace(key, r);
            } else {
                SuccessRow& m = it->second;
                m.mean_abs_err_g = (m.mean_abs_err_g * m.attempts + r.mean_abs_err_g * r.attempts) /
                                   (m.attempts + r.attempts);
                m.attempts += r.attempts;
                m.successes += r.successes;
            }
        }

    SuccessTable table;
    for (auto& [key, row] : merged) table.rows.push_back(std::move(row));
    detail::sort_rows(table.rows);
    return table;
}

// ---------------------------------------------------------------------------
// Reporting

namespace detail {

inline std::string csv_double(double d) {
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
}

}  // namespace detail

inline std::string success_csv(const SuccessTable& table) {
    std::ostringstream os;
    os << "material,size,policy,target_g,tol,attempts,successes,rate,mean_abs_err_g\n";
    for (const auto& r : table.rows) {
        os << r.material << ',' << r.size << ',' << r.policy << ','
           << detail::csv_double(r.target_g) << ',' << detail::csv_double(r.tol) << ','
           << r.attempts << ',' << r.successes << ',' << detail::csv_double(r.rate()) << ','
           << detail::csv_double(r.mean_abs_err_g) << "\n";
    }
    return os.str();
}

inline SuccessTable parse_success_csv(const std::string& text) {
    SuccessTable table;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) ||
        line != "material,size,policy,target_g,tol,attempts,successes,rate,mean_abs_err_g")
        throw data_error(data_error::kind::corrupt_header, "unexpected results CSV header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string item;
        std::istringstream ls(line);
        while (std::getline(ls, item, ',')) f.push_back(item);
        if (f.size() != 9)
            throw data_error(data_error::kind::truncated_payload, "bad results CSV row");
        SuccessRow r;
        r.material = f[0];
        r.size = detail::parse_int(f[1]);
        r.policy = f[2];
        r.target_g = detail::parse_double(f[3]);
        r.tol = detail::parse_double(f[4]);
        r.attempts = detail::parse_int(f[5]);
        r.successes = detail::parse_int(f[6]);
        r.mean_abs_err_g = detail::parse_double(f[8]);
        table.rows.push_back(std::move(r));
    }
    return table;
}

/// Aligned text table per (material, size): policies as rows, target x tol as
/// columns. '*' marks EE/RND cells at least as good as Baseline, the paper
/// table's bolding convention.
inline std::string success_text_table(const SuccessTable& table) {
    std::ostringstream os;
    os << std::fixed;

    std::vector<std::pair<std::string, int>> groups;
    for (const auto& r : table.rows) {
        std::pair<std::string, int> g{r.material, r.size};
        if (groups.empty() || groups.back() != g) groups.push_back(g);
    }

    for (const auto& [material, size] : groups) {
        std::vector<std::pair<double, double>> cols;  // (target, tol)
        std::vector<std::string> policies;
        for (const auto& r : table.rows) {
            if (r.material != material || r.size != size) continue;
            if (std::find(cols.begin(), cols.end(), std::make_pair(r.target_g, r.tol)) ==
                cols.end())
                cols.emplace_back(r.target_g, r.tol);
            if (std::find(policies.begin(), policies.end(), r.policy) == policies.end())
                policies.push_back(r.policy);
        }
        std::sort(cols.begin(), cols.end());

        os << "== " << material << ", dataset size " << size << " ==\n";
        os << std::setw(10) << std::left << "policy" << std::right;
        for (const auto& [target, tol] : cols) {
            std::ostringstream h;
            h << std::fixed << std::setprecision(0) << target << "g@" << std::setprecision(0)
              << tol * 100 << "%";
            os << std::setw(11) << h.str();
        }
        os << "\n";
        for (const auto& policy : policies) {
            os << std::setw(10) << std::left << policy << std::right;
            for (const auto& [target, tol] : cols) {
                const SuccessRow* r = table.find(material, size, policy, target, tol);
                const SuccessRow* base = table.find(material, size, "baseline", target, tol);
                std::ostringstream cell;
                if (r) {
                    cell << std::fixed << std::setprecision(2) << r->rate();
                    if ((policy == "ee" || policy == "rnd") && base && r->rate() >= base->rate())
                        cell << '*';
                }
                os << std::setw(11) << cell.str();
            }
            os << "\n";
        }
        os << "\n";
    }
    return os.str();
}

/// Write the CSV to `csv_path` and the aligned text rendering next to it
/// (extension swapped to .txt).
inline void report(const SuccessTable& table, const std::string& csv_path) {
    if (table.rows.empty()) throw config_error("report: empty table");
    if (csv_path.empty()) throw data_error(data_error::kind::invalid_path, "report path empty");
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv)
        throw data_error(data_error::kind::invalid_path,
                         "cannot open '" + csv_path + "' for writing");
    csv << success_csv(table);

    std::string txt_path = csv_path;
    const std::size_t dot = txt_path.find_last_of('.');
    if (dot != std::string::npos && txt_path.find('/', dot) == std::string::npos)
        txt_path.resize(dot);
    txt_path += ".txt";
    std::ofstream txt(txt_path, std::ios::trunc);
    if (!txt)
        throw data_error(data_error::kind::invalid_path,
                         "cannot open '" + txt_path + "' for writing");
    txt << success_text_table(table);
}

}  // namespace grainpick
