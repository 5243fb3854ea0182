#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "grainpick/errors.hpp"

namespace grainpick::detail {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");
static_assert(sizeof(float) == 4 && sizeof(double) == 8);

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v, const char* what) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is)
        throw data_error(data_error::kind::truncated_payload,
                         std::string("unexpected end of file while reading ") + what);
}

}  // namespace grainpick::detail
