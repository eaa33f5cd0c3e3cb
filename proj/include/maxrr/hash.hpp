#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace maxrr {

// Streaming FNV-1a (64-bit). Used for weight fingerprints, model hashes and
// config hashes; not a cryptographic digest.
class Fnv1a {
public:
    void update(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001B3ULL;
        }
    }

    template <typename T>
    void update_pod(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(T));
    }

    template <typename T>
    void update_vec(const std::vector<T>& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update_pod<uint64_t>(v.size());
        if (!v.empty()) update(v.data(), v.size() * sizeof(T));
    }

    void update_str(const std::string& s) {
        update_pod<uint64_t>(s.size());
        update(s.data(), s.size());
    }

    uint64_t digest() const { return state_; }

private:
    uint64_t state_ = 0xCBF29CE484222325ULL;
};

inline uint64_t fnv1a(const void* data, size_t n) {
    Fnv1a h;
    h.update(data, n);
    return h.digest();
}

std::string to_hex(uint64_t v);

}  // namespace maxrr
