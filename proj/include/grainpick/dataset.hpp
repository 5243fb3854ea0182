#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "grainpick/binio.hpp"
#include "grainpick/errors.hpp"
#include "grainpick/patch.hpp"

namespace grainpick {

/// Round a mass to the scale resolution, ties to even (matches the default
/// FPU rounding of nearbyint).
inline double quantize_mass(double mass_g, double resolution_g) {
    return std::nearbyint(mass_g / resolution_g) * resolution_g;
}

/// One dataset row: the patch cropped before the grasp and the grasped mass
/// as the scale would report it.
struct GraspRecord {
    Patch patch;
    float mass_g = 0.0f;

    bool operator==(const GraspRecord& o) const {
        return patch == o.patch && mass_g == o.mass_g;
    }
};

struct Dataset {
    std::vector<GraspRecord> records;
    std::string material_name;
    std::uint64_t seed = 0;

    std::size_t size() const { return records.size(); }

    /// The collection loop is online, so the first n records of a longer run
    /// are exactly the dataset a shorter run would have produced.
    Dataset prefix(std::size_t n) const {
        Dataset out;
        out.records.assign(records.begin(), records.begin() + std::min(n, records.size()));
        out.material_name = material_name;
        out.seed = seed;
        return out;
    }

    bool operator==(const Dataset& o) const {
        return records == o.records && material_name == o.material_name && seed == o.seed;
    }
};

namespace detail {

constexpr char kDatasetMagic[4] = {'G', 'P', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
    if (path.empty())
        throw data_error(data_error::kind::invalid_path, "dataset path is empty");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw data_error(data_error::kind::invalid_path, "cannot open '" + path + "' for writing");

    const std::uint32_t channels = Patch::kChannels;
    const std::uint32_t side = ds.records.empty() ? 0u
                                                  : static_cast<std::uint32_t>(ds.records[0].patch.side);
    os.write(detail::kDatasetMagic, 4);
    detail::write_pod(os, detail::kDatasetVersion);
    detail::write_pod(os, channels);
    detail::write_pod(os, side);
    detail::write_pod(os, static_cast<std::uint64_t>(ds.records.size()));
    detail::write_pod(os, ds.seed);
    detail::write_pod(os, static_cast<std::uint32_t>(ds.material_name.size()));
    os.write(ds.material_name.data(), static_cast<std::streamsize>(ds.material_name.size()));

    for (const GraspRecord& rec : ds.records) {
        if (rec.patch.side != static_cast<int>(side))
            throw data_error(data_error::kind::channel_mismatch,
                             "records with mixed patch sizes cannot be saved");
        detail::write_pod(os, static_cast<std::int32_t>(rec.patch.center_x));
        detail::write_pod(os, static_cast<std::int32_t>(rec.patch.center_y));
        os.write(reinterpret_cast<const char*>(rec.patch.data.data()),
                 static_cast<std::streamsize>(rec.patch.data.size() * sizeof(float)));
        detail::write_pod(os, rec.mass_g);
    }
    if (!os) throw data_error(data_error::kind::invalid_path, "write to '" + path + "' failed");
}

inline Dataset load_dataset(const std::string& path) {
    if (path.empty())
        throw data_error(data_error::kind::invalid_path, "dataset path is empty");
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw data_error(data_error::kind::invalid_path, "cannot open '" + path + "' for reading");

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kDatasetMagic, 4) != 0)
        throw data_error(data_error::kind::corrupt_header, "'" + path + "' is not a dataset file");
    std::uint32_t version = 0, channels = 0, side = 0;
    detail::read_pod(is, version, "version");
    if (version != detail::kDatasetVersion)
        throw data_error(data_error::kind::corrupt_header,
                         "unsupported dataset version " + std::to_string(version));
    detail::read_pod(is, channels, "channel count");
    if (channels != Patch::kChannels)
        throw data_error(data_error::kind::channel_mismatch,
                         "expected " + std::to_string(Patch::kChannels) + " channels, file has " +
                             std::to_string(channels));
    detail::read_pod(is, side, "patch side");
    std::uint64_t n = 0;
    detail::read_pod(is, n, "record count");
    Dataset ds;
    detail::read_pod(is, ds.seed, "seed");
    std::uint32_t name_len = 0;
    detail::read_pod(is, name_len, "material name length");
    ds.material_name.resize(name_len);
    is.read(ds.material_name.data(), name_len);
    if (!is) throw data_error(data_error::kind::truncated_payload, "truncated material name");

    ds.records.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        GraspRecord rec;
        rec.patch = Patch(static_cast<int>(side));
        std::int32_t cx = 0, cy = 0;
        detail::read_pod(is, cx, "patch center");
        detail::read_pod(is, cy, "patch center");
        rec.patch.center_x = cx;
        rec.patch.center_y = cy;
        is.read(reinterpret_cast<char*>(rec.patch.data.data()),
                static_cast<std::streamsize>(rec.patch.data.size() * sizeof(float)));
        if (!is)
            throw data_error(data_error::kind::truncated_payload,
                             "truncated patch tensor in record " + std::to_string(i));
        detail::read_pod(is, rec.mass_g, "mass");
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace grainpick
