#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace flexris {

/// Thrown for unreadable or malformed input files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
inline void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
inline T read_le(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw FormatError("unexpected end of file");
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

inline void write_magic(std::ostream& os, const char* magic, std::size_t n) { os.write(magic, static_cast<std::streamsize>(n)); }

inline void expect_magic(std::istream& is, const char* magic, std::size_t n) {
    std::string buf(n, '\0');
    if (!is.read(buf.data(), static_cast<std::streamsize>(n)) || std::memcmp(buf.data(), magic, n) != 0)
        throw FormatError("bad magic: not a " + std::string(magic, n) + " file");
}

}  // namespace io
}  // namespace flexris
