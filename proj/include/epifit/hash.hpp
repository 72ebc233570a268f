#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace epifit {

/// Incremental 64-bit FNV-1a.
class Fnv1a {
public:
    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state_ ^= p[i];
            state_ *= 1099511628211ULL;
        }
    }
    /// Hashes the string followed by a NUL separator.
    void update(std::string_view s) {
        update(s.data(), s.size());
        update("", 1);
    }
    void update_u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        update(b, 8);
    }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
        return buf;
    }

private:
    std::uint64_t state_ = 1469598103934665603ULL;
};

inline std::string fnv1a_hex(std::string_view s) {
    Fnv1a h;
    h.update(s.data(), s.size());
    return h.hex();
}

}  // namespace epifit
