#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>

namespace chaosflow {

// Streaming FNV-1a (64-bit).  Used for artifact fingerprints and config
// hashes; stable across runs and platforms of the same endianness.
class Fnv1a64 {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= static_cast<std::uint64_t>(p[i]);
            state_ *= 0x100000001b3ull;
        }
    }

    template <typename T>
    void update_value(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(T));
    }

    void update_string(const std::string& s) {
        const std::uint64_t n = s.size();
        update_value(n);
        update(s.data(), s.size());
    }

    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    Fnv1a64 h;
    h.update(data, n);
    return h.digest();
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t hash_file(const std::filesystem::path& path);

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

} // namespace chaosflow
