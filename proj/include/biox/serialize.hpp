#pragma once

// Little-endian binary IO helpers shared by the checkpoint and dataset file
// formats. Integers and floats are written byte-by-byte so files are
// identical regardless of host endianness; floats round-trip bit-exactly.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace biox::io {

inline void write_u8(std::ostream& out, uint8_t v) { out.put(static_cast<char>(v)); }

inline void write_u32(std::ostream& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) write_u8(out, static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void write_u64(std::ostream& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) write_u8(out, static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void write_i32(std::ostream& out, int32_t v) { write_u32(out, static_cast<uint32_t>(v)); }

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<uint64_t>(v)); }

inline void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<uint32_t>(v)); }

inline uint8_t read_u8(std::istream& in) {
    int c = in.get();
    if (c == EOF) throw std::runtime_error("file: truncated (unexpected end of data)");
    return static_cast<uint8_t>(c);
}

inline uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(read_u8(in)) << (8 * i);
    return v;
}

inline uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(read_u8(in)) << (8 * i);
    return v;
}

inline int32_t read_i32(std::istream& in) { return static_cast<int32_t>(read_u32(in)); }

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

inline void write_magic(std::ostream& out, const char magic[8]) { out.write(magic, 8); }

inline void check_magic(std::istream& in, const char magic[8], const std::string& what) {
    char got[8];
    in.read(got, 8);
    if (in.gcount() != 8 || std::string(got, 8) != std::string(magic, 8)) {
        throw std::runtime_error(what + ": bad magic bytes (not a " + what + " file)");
    }
}

inline void write_text(std::ostream& out, const std::string& text) {
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline std::string read_text(std::istream& in) {
    uint64_t len = read_u64(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<uint64_t>(in.gcount()) != len) throw std::runtime_error("file: truncated header");
    return text;
}

inline void write_f64_block(std::ostream& out, std::span<const double> v) {
    write_u64(out, v.size());
    for (double x : v) write_f64(out, x);
}

inline std::vector<double> read_f64_block(std::istream& in) {
    uint64_t n = read_u64(in);
    std::vector<double> v(n);
    for (uint64_t i = 0; i < n; ++i) v[i] = read_f64(in);
    return v;
}

inline void write_f32_block(std::ostream& out, std::span<const float> v) {
    write_u64(out, v.size());
    for (float x : v) write_f32(out, x);
}

inline std::vector<float> read_f32_block(std::istream& in) {
    uint64_t n = read_u64(in);
    std::vector<float> v(n);
    for (uint64_t i = 0; i < n; ++i) v[i] = read_f32(in);
    return v;
}

inline void write_i32_block(std::ostream& out, std::span<const int32_t> v) {
    write_u64(out, v.size());
    for (int32_t x : v) write_i32(out, x);
}

inline std::vector<int32_t> read_i32_block(std::istream& in) {
    uint64_t n = read_u64(in);
    std::vector<int32_t> v(n);
    for (uint64_t i = 0; i < n; ++i) v[i] = read_i32(in);
    return v;
}

inline void write_u64_block(std::ostream& out, std::span<const uint64_t> v) {
    write_u64(out, v.size());
    for (uint64_t x : v) write_u64(out, x);
}

inline std::vector<uint64_t> read_u64_block(std::istream& in) {
    uint64_t n = read_u64(in);
    std::vector<uint64_t> v(n);
    for (uint64_t i = 0; i < n; ++i) v[i] = read_u64(in);
    return v;
}

}  // namespace biox::io
