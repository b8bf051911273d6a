// FNV-1a 64-bit content hashing for determinism checks and run manifests.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>

#include "mscpt/mat.hpp"

namespace mscpt {

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ull;

struct Hasher {
    uint64_t h = kFnvOffset;

    void bytes(const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= kFnvPrime;
        }
    }
    void u64(uint64_t v) { bytes(&v, sizeof v); }
    void i32(int32_t v) { bytes(&v, sizeof v); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void mat(const Mat& m) {
        i32(m.rows);
        i32(m.cols);
        for (double x : m.a) f64(x);
    }
};

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline uint64_t hash_mat(const Mat& m) {
    Hasher hh;
    hh.mat(m);
    return hh.h;
}

inline uint64_t hash_string(const std::string& s) {
    Hasher hh;
    hh.str(s);
    return hh.h;
}

}  // namespace mscpt
