#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "doprec/errors.hpp"

namespace doprec::bin {

// Little-endian scalar I/O.
template <class T>
void put(std::ostream& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in) {
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) throw IoError("unexpected end of file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

inline void put_magic(std::ostream& out, const char* magic) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char* magic, const char* what) {
    char buf[4];
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
        throw IoError(std::string("not a ") + what + " file (bad magic)");
    }
}

inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
    const auto len = get<std::uint32_t>(in);
    if (len > (1u << 24)) throw IoError("string field too long");
    std::string s(len, '\0');
    if (len && !in.read(s.data(), len)) throw IoError("unexpected end of file");
    return s;
}

}  // namespace doprec::bin
