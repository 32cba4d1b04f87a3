#pragma once

// Minimal NumPy .npy v1.0 reader/writer (C-order, little-endian dtypes).
// All rasters in the dataset layout are stored in this format.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"

namespace depthfill {

namespace npy_detail {

template <class T>
const char* dtype_descr() {
    if constexpr (std::is_same_v<T, float>) return "<f4";
    else if constexpr (std::is_same_v<T, double>) return "<f8";
    else if constexpr (std::is_same_v<T, std::uint8_t>) return "|u1";
    else if constexpr (std::is_same_v<T, std::int32_t>) return "<i4";
    else if constexpr (std::is_same_v<T, std::int64_t>) return "<i8";
    else static_assert(sizeof(T) == 0, "unsupported npy dtype");
}

inline std::string header_value(const std::string& header, const std::string& key,
                                const std::string& path) {
    const auto kpos = header.find("'" + key + "'");
    if (kpos == std::string::npos) throw IoError(path + ": npy header missing key " + key);
    auto pos = header.find(':', kpos);
    if (pos == std::string::npos) throw IoError(path + ": malformed npy header");
    ++pos;
    while (pos < header.size() && header[pos] == ' ') ++pos;
    std::string out;
    if (header[pos] == '\'') {
        const auto end = header.find('\'', pos + 1);
        out = header.substr(pos + 1, end - pos - 1);
    } else if (header[pos] == '(') {
        const auto end = header.find(')', pos);
        out = header.substr(pos, end - pos + 1);
    } else {
        auto end = header.find_first_of(",}", pos);
        out = header.substr(pos, end - pos);
    }
    return out;
}

}  // namespace npy_detail

template <class T>
Tensor<T> npy_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);

    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
        throw IoError(path + ": not an npy file");
    }
    const int major = magic[6];
    std::uint32_t header_len = 0;
    if (major == 1) {
        std::uint16_t len16 = 0;
        f.read(reinterpret_cast<char*>(&len16), 2);
        header_len = len16;
    } else {
        f.read(reinterpret_cast<char*>(&header_len), 4);
    }
    std::string header(header_len, '\0');
    f.read(header.data(), header_len);
    if (!f) throw IoError(path + ": truncated npy header");

    const std::string descr = npy_detail::header_value(header, "descr", path);
    if (descr != npy_detail::dtype_descr<T>()) {
        throw IoError(path + ": dtype is " + descr + ", expected " +
                      npy_detail::dtype_descr<T>());
    }
    const std::string order = npy_detail::header_value(header, "fortran_order", path);
    if (order.find("True") != std::string::npos) {
        throw IoError(path + ": fortran-order npy is not supported");
    }

    const std::string shape_str = npy_detail::header_value(header, "shape", path);
    std::vector<int> shape;
    std::string num;
    for (char c : shape_str) {
        if (c >= '0' && c <= '9') {
            num += c;
        } else if (!num.empty()) {
            shape.push_back(std::stoi(num));
            num.clear();
        }
    }
    if (shape.empty()) throw IoError(path + ": scalar npy is not supported");

    Tensor<T> out(shape);
    f.read(reinterpret_cast<char*>(out.data()),
           static_cast<std::streamsize>(out.size() * sizeof(T)));
    if (!f) throw IoError(path + ": truncated npy payload");
    return out;
}

template <class T>
void npy_save(const std::string& path, const Tensor<T>& t) {
    std::string dict = "{'descr': '";
    dict += npy_detail::dtype_descr<T>();
    dict += "', 'fortran_order': False, 'shape': (";
    for (int i = 0; i < t.ndim(); ++i) {
        dict += std::to_string(t.dim(i));
        if (t.ndim() == 1 || i + 1 < t.ndim()) dict += ",";
        if (i + 1 < t.ndim()) dict += " ";
    }
    dict += "), }";
    // pad so that data starts at a multiple of 64 bytes
    const std::size_t base = 10 + dict.size() + 1;
    const std::size_t padded = (base + 63) / 64 * 64;
    dict += std::string(padded - base, ' ');
    dict += '\n';

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f.write("\x93NUMPY\x01\x00", 8);
    const std::uint16_t len16 = static_cast<std::uint16_t>(dict.size());
    f.write(reinterpret_cast<const char*>(&len16), 2);
    f.write(dict.data(), static_cast<std::streamsize>(dict.size()));
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!f) throw IoError("failed writing " + path);
}

}  // namespace depthfill
