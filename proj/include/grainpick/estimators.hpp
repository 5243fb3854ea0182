#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "grainpick/binio.hpp"
#include "grainpick/config.hpp"
#include "grainpick/dataset.hpp"
#include "grainpick/errors.hpp"
#include "grainpick/mlp.hpp"
#include "grainpick/patch.hpp"
#include "grainpick/rng.hpp"

namespace grainpick {

/// Per-channel input standardization, fit on the training split only and
/// shared by all three heads so their inputs are comparable.
struct Normalization {
    std::array<double, Patch::kChannels> mean{0.0, 0.0};
    std::array<double, Patch::kChannels> stddev{1.0, 1.0};
    double clip = 4.0;  // standardized values clamp, bounds extrapolation off-distribution

    static Normalization fit(const std::vector<GraspRecord>& records,
                             const std::vector<std::size_t>& indices, double clip = 4.0) {
        Normalization n;
        n.clip = clip;
        if (indices.empty()) return n;
        const std::size_t side = records[indices[0]].patch.side;
        const std::size_t per_ch = side * side;
        for (int c = 0; c < Patch::kChannels; ++c) {
            double sum = 0.0, sum2 = 0.0;
            for (std::size_t i : indices) {
                const float* p = records[i].patch.data.data() + c * per_ch;
                for (std::size_t j = 0; j < per_ch; ++j) {
                    sum += p[j];
                    sum2 += static_cast<double>(p[j]) * p[j];
                }
            }
            const double count = static_cast<double>(indices.size() * per_ch);
            n.mean[c] = sum / count;
            const double var = std::max(sum2 / count - n.mean[c] * n.mean[c], 0.0);
            n.stddev[c] = std::max(std::sqrt(var), 1e-9);
        }
        return n;
    }

    void apply(const Patch& p, std::vector<double>& out) const {
        const std::size_t per_ch = static_cast<std::size_t>(p.side) * p.side;
        out.resize(Patch::kChannels * per_ch);
        for (int c = 0; c < Patch::kChannels; ++c) {
            const double m = mean[c], inv_s = 1.0 / stddev[c];
            const float* src = p.data.data() + c * per_ch;
            double* dst = out.data() + c * per_ch;
            for (std::size_t j = 0; j < per_ch; ++j)
                dst[j] = std::clamp((src[j] - m) * inv_s, -clip, clip);
        }
    }

    bool operator==(const Normalization& o) const {
        return mean == o.mean && stddev == o.stddev && clip == o.clip;
    }
};

namespace detail {

inline std::vector<int> head_widths(const ExperimentConfig& cfg, int out_dim) {
    std::vector<int> w;
    w.push_back(Patch::kChannels * cfg.patch_cells * cfg.patch_cells);
    for (int h : cfg.hidden) w.push_back(h);
    w.push_back(out_dim);
    return w;
}

inline std::vector<Act> head_activations(std::size_t n_layers, Act output) {
    std::vector<Act> a(n_layers, Act::relu);
    a.back() = output;
    return a;
}

// Training split: all records when n <= 100, otherwise a seeded 90% subset
// with the remainder kept for the reported held-out loss.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> holdout;
};

inline Split make_split(std::size_t n, std::uint64_t seed) {
    Split s;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n <= 100) {
        s.train = std::move(idx);
        return s;
    }
    Rng rng(derive_seed(seed, "split"));
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.uniform_int(static_cast<int>(i))]);
    const std::size_t n_holdout = n / 10;
    s.holdout.assign(idx.begin(), idx.begin() + n_holdout);
    s.train.assign(idx.begin() + n_holdout, idx.end());
    return s;
}

}  // namespace detail

/// F(x; xi): regression from a patch to the expected grasped grams.
struct MassEstimator {
    Mlp net;
    Normalization norm;
    double fit_loss = 0.0;       // MSE on holdout (train when n <= 100)
    bool fit_loss_is_holdout = false;

    double predict(const Patch& p) const {
        std::vector<double> x;
        norm.apply(p, x);
        return net.forward(x)[0];
    }
};

inline double predict_mass(const MassEstimator& est, const Patch& p) { return est.predict(p); }

/// Predicts |actual - estimated| of the mass head; softplus keeps it >= 0.
struct ErrorEstimator {
    Mlp net;
    Normalization norm;

    double predict(const Patch& p) const {
        std::vector<double> x;
        norm.apply(p, x);
        return net.forward(x)[0];
    }
};

inline double uncertainty_ee(const ErrorEstimator& est, const Patch& p) {
    return est.predict(p);
}

/// Random network distillation pair: a frozen random target embedding and a
/// predictor trained to match it on the training patches. Their squared
/// distance grows off the training distribution.
struct RndPair {
    Mlp target;
    Mlp predictor;
    Normalization norm;
    int k = 16;

    double uncertainty(const Patch& p) const {
        std::vector<double> x;
        norm.apply(p, x);
        const auto ft = target.forward(x);
        const auto fp = predictor.forward(x);
        double d2 = 0.0;
        for (std::size_t i = 0; i < ft.size(); ++i) {
            const double d = fp[i] - ft[i];
            d2 += d * d;
        }
        return d2;
    }
};

inline double uncertainty_rnd(const RndPair& pair, const Patch& p) {
    return pair.uncertainty(p);
}

inline MassEstimator train_mass(const Dataset& ds, const ExperimentConfig& cfg,
                                const TrainConfig& tcfg) {
    if (ds.records.empty()) throw model_error("train_mass: empty dataset");
    const detail::Split split = detail::make_split(ds.size(), tcfg.seed);

    MassEstimator est;
    est.norm = Normalization::fit(ds.records, split.train, cfg.norm_clip);
    Rng init_rng(derive_seed(tcfg.seed, "mass_init"));
    auto widths = detail::head_widths(cfg, cfg.output_dim);
    est.net = Mlp::create(widths, detail::head_activations(widths.size() - 1, Act::identity),
                          init_rng);

    const Normalization& norm = est.norm;
    SampleFn sample = [&](std::size_t i, Rng& rng, std::vector<double>& x,
                          std::vector<double>& y) {
        const GraspRecord& rec = ds.records[split.train[i]];
        norm.apply(flip_augment(rec.patch, rng), x);
        y.assign(1, rec.mass_g);
    };
    train(est.net, split.train.size(), sample, tcfg);

    const auto& eval_idx = split.holdout.empty() ? split.train : split.holdout;
    double loss = 0.0;
    for (std::size_t i : eval_idx) {
        const double d = est.predict(ds.records[i].patch) - ds.records[i].mass_g;
        loss += d * d;
    }
    est.fit_loss = loss / static_cast<double>(eval_idx.size());
    est.fit_loss_is_holdout = !split.holdout.empty();
    return est;
}

/// Self-supervised error head: targets are |label - mass prediction| built
/// from the dataset itself, no signal beyond what train_mass already used.
inline ErrorEstimator train_ee(const Dataset& ds, const MassEstimator& mass_est,
                               const ExperimentConfig& cfg, const TrainConfig& tcfg) {
    if (ds.records.empty()) throw model_error("train_ee: empty dataset");
    const detail::Split split = detail::make_split(ds.size(), tcfg.seed);

    std::vector<double> targets(split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const GraspRecord& rec = ds.records[split.train[i]];
        targets[i] = std::abs(rec.mass_g - mass_est.predict(rec.patch));
    }

    ErrorEstimator est;
    est.norm = mass_est.norm;
    Rng init_rng(derive_seed(tcfg.seed, "ee_init"));
    auto widths = detail::head_widths(cfg, cfg.output_dim);
    est.net = Mlp::create(widths, detail::head_activations(widths.size() - 1, Act::softplus),
                          init_rng);

    const Normalization& norm = est.norm;
    SampleFn sample = [&](std::size_t i, Rng& rng, std::vector<double>& x,
                          std::vector<double>& y) {
        norm.apply(flip_augment(ds.records[split.train[i]].patch, rng), x);
        y.assign(1, targets[i]);
    };
    train(est.net, split.train.size(), sample, tcfg);
    return est;
}

inline RndPair train_rnd(const Dataset& ds, const ExperimentConfig& cfg,
                         const TrainConfig& tcfg, int k) {
    if (ds.records.empty()) throw model_error("train_rnd: empty dataset");
    if (k < 1) throw model_error("train_rnd: embedding dimension must be >= 1");
    const detail::Split split = detail::make_split(ds.size(), tcfg.seed);

    RndPair pair;
    pair.k = k;
    pair.norm = Normalization::fit(ds.records, split.train, cfg.norm_clip);
    auto widths = detail::head_widths(cfg, k);
    auto acts = detail::head_activations(widths.size() - 1, Act::identity);
    Rng target_rng(derive_seed(tcfg.seed, "rnd_target"));
    Rng pred_rng(derive_seed(tcfg.seed, "rnd_predictor"));
    pair.target = Mlp::create(widths, acts, target_rng);
    pair.predictor = Mlp::create(widths, acts, pred_rng);

    const Mlp target_before = pair.target;

    const Normalization& norm = pair.norm;
    const Mlp& target = pair.target;
    SampleFn sample = [&](std::size_t i, Rng& rng, std::vector<double>& x,
                          std::vector<double>& y) {
        norm.apply(flip_augment(ds.records[split.train[i]].patch, rng), x);
        y = target.forward(x);
    };
    train(pair.predictor, split.train.size(), sample, tcfg);

    if (!(pair.target == target_before))
        throw model_error("train_rnd: frozen target network was modified");
    return pair;
}

/// The three heads trained on one dataset. RND does not depend on the mass
/// head and trains concurrently with it; EE waits for the mass head.
struct ModelBundle {
    MassEstimator mass;
    ErrorEstimator ee;
    RndPair rnd;
};

inline ModelBundle train_bundle(const Dataset& ds, const ExperimentConfig& cfg,
                                std::uint64_t seed) {
    ModelBundle bundle;
    std::exception_ptr rnd_error;
    std::thread rnd_thread([&] {
        try {
            bundle.rnd = train_rnd(ds, cfg, cfg.train_config(derive_seed(seed, "rnd")), cfg.rnd_k);
        } catch (...) {
            rnd_error = std::current_exception();
        }
    });
    try {
        bundle.mass = train_mass(ds, cfg, cfg.train_config(derive_seed(seed, "mass")));
        bundle.ee = train_ee(ds, bundle.mass, cfg, cfg.train_config(derive_seed(seed, "ee")));
    } catch (...) {
        rnd_thread.join();
        throw;
    }
    rnd_thread.join();
    if (rnd_error) std::rethrow_exception(rnd_error);
    return bundle;
}

namespace detail {

constexpr char kBundleMagic[4] = {'G', 'P', 'M', 'B'};
constexpr std::uint32_t kBundleVersion = 1;

inline void write_norm(std::ostream& os, const Normalization& n) {
    for (double v : n.mean) write_pod(os, v);
    for (double v : n.stddev) write_pod(os, v);
    write_pod(os, n.clip);
}

inline Normalization read_norm(std::istream& is) {
    Normalization n;
    for (double& v : n.mean) read_pod(is, v, "normalization");
    for (double& v : n.stddev) read_pod(is, v, "normalization");
    read_pod(is, n.clip, "normalization");
    return n;
}

}  // namespace detail

inline void save_bundle(const ModelBundle& bundle, std::uint64_t cfg_hash,
                        const std::string& path) {
    if (path.empty()) throw data_error(data_error::kind::invalid_path, "bundle path is empty");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw data_error(data_error::kind::invalid_path, "cannot open '" + path + "' for writing");
    os.write(detail::kBundleMagic, 4);
    detail::write_pod(os, detail::kBundleVersion);
    detail::write_pod(os, cfg_hash);
    detail::write_norm(os, bundle.mass.norm);
    detail::write_pod(os, static_cast<std::int32_t>(bundle.rnd.k));
    detail::write_pod(os, bundle.mass.fit_loss);
    detail::write_pod(os, static_cast<std::uint8_t>(bundle.mass.fit_loss_is_holdout ? 1 : 0));
    save_mlp(os, bundle.mass.net);
    save_mlp(os, bundle.ee.net);
    save_mlp(os, bundle.rnd.target);
    save_mlp(os, bundle.rnd.predictor);
    if (!os) throw data_error(data_error::kind::invalid_path, "write to '" + path + "' failed");
}

struct LoadedBundle {
    ModelBundle bundle;
    std::uint64_t config_hash = 0;
};

inline LoadedBundle load_bundle(const std::string& path) {
    if (path.empty()) throw data_error(data_error::kind::invalid_path, "bundle path is empty");
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw data_error(data_error::kind::invalid_path, "cannot open '" + path + "' for reading");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kBundleMagic, 4) != 0)
        throw data_error(data_error::kind::corrupt_header, "'" + path + "' is not a model bundle");
    std::uint32_t version = 0;
    detail::read_pod(is, version, "bundle version");
    if (version != detail::kBundleVersion)
        throw data_error(data_error::kind::corrupt_header, "unsupported bundle version");
    LoadedBundle out;
    detail::read_pod(is, out.config_hash, "config hash");
    Normalization norm = detail::read_norm(is);
    std::int32_t k = 0;
    detail::read_pod(is, k, "rnd k");
    detail::read_pod(is, out.bundle.mass.fit_loss, "fit loss");
    std::uint8_t holdout = 0;
    detail::read_pod(is, holdout, "fit loss flag");
    out.bundle.mass.fit_loss_is_holdout = holdout != 0;
    out.bundle.mass.norm = norm;
    out.bundle.ee.norm = norm;
    out.bundle.rnd.norm = norm;
    out.bundle.rnd.k = k;
    out.bundle.mass.net = load_mlp(is);
    out.bundle.ee.net = load_mlp(is);
    out.bundle.rnd.target = load_mlp(is);
    out.bundle.rnd.predictor = load_mlp(is);
    return out;
}

}  // namespace grainpick
