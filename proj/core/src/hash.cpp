#include "chaosflow/hash.hpp"

#include "chaosflow/errors.hpp"

#include <charconv>
#include <fstream>
#include <vector>

namespace chaosflow {

std::uint64_t hash_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UpstreamMissing("cannot open for hashing: " + path.string());
    Fnv1a64 h;
    std::vector<char> buf(1 << 16);
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    return h.digest();
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw FormatError("cannot parse hex fingerprint: '" + s + "'");
    return v;
}

} // namespace chaosflow
