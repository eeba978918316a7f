#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "ssba/boundary.hpp"
#include "ssba/error.hpp"
#include "ssba/models/classifier.hpp"

namespace ssba {

// Boundary file, all integers and reals little-endian:
//
//   magic     8 bytes  "SSBABND\0"
//   version   u32      = 1
//   method    u32      0 = ssba, 1 = grid
//   n         u64      feature count
//   count     u64      |D|
//   epsilon   f64
//   T         u64      requested threshold
//   seed      u64
//   model     u64      model fingerprint
//   n0, n1    u64      endpoint rows per class
//   points    count * n f64, row-major
//   pairs     count * 2 u64
//   truncated count u8
//   class0    n0 * n f64
//   class1    n1 * n f64

inline constexpr std::uint32_t boundary_format_version = 1;
inline constexpr std::array<char, 8> boundary_magic{'S', 'S', 'B', 'A', 'B', 'N', 'D', '\0'};

namespace detail {

class LeWriter {
public:
    explicit LeWriter(std::ostream& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void matrix(const Matrix& m) {
        for (double v : m.data()) f64(v);
    }

private:
    std::ostream& out_;
};

class LeReader {
public:
    explicit LeReader(std::istream& in) : in_(in) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(byte()); }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Matrix matrix(std::uint64_t rows, std::uint64_t cols) {
        Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
        for (auto& v : m.data()) v = f64();
        return m;
    }

private:
    unsigned char byte() {
        const int c = in_.get();
        if (c == std::char_traits<char>::eof()) throw format_error("boundary file truncated");
        return static_cast<unsigned char>(c);
    }
    std::istream& in_;
};

}  // namespace detail

inline void save_boundary(std::ostream& out, const BoundaryPointSet& set) {
    detail::LeWriter w(out);
    out.write(boundary_magic.data(), boundary_magic.size());
    w.u32(boundary_format_version);
    w.u32(static_cast<std::uint32_t>(set.method));
    w.u64(set.width());
    w.u64(set.size());
    w.f64(set.epsilon);
    w.u64(set.threshold_T);
    w.u64(set.seed);
    w.u64(set.model_fingerprint);
    w.u64(set.class0_rows.rows());
    w.u64(set.class1_rows.rows());
    w.matrix(set.points);
    for (const auto& [a, b] : set.pair_indices) {
        w.u64(a);
        w.u64(b);
    }
    for (auto t : set.truncated) w.u8(t);
    w.matrix(set.class0_rows);
    w.matrix(set.class1_rows);
}

inline void save_boundary(const std::string& path, const BoundaryPointSet& set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot write boundary file '" + path + "'");
    save_boundary(out, set);
    if (!out) throw format_error("write failed for boundary file '" + path + "'");
}

[[nodiscard]] inline BoundaryPointSet load_boundary(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != boundary_magic) throw format_error("not a boundary file");
    detail::LeReader r(in);
    if (const auto v = r.u32(); v != boundary_format_version)
        throw format_error("unsupported boundary file version " + std::to_string(v));
    BoundaryPointSet set;
    const auto method = r.u32();
    if (method > 1) throw format_error("boundary file: unknown method tag");
    set.method = static_cast<BoundaryPointSet::Method>(method);
    const auto n = r.u64();
    const auto count = r.u64();
    set.epsilon = r.f64();
    set.threshold_T = r.u64();
    set.seed = r.u64();
    set.model_fingerprint = r.u64();
    const auto n0 = r.u64();
    const auto n1 = r.u64();
    set.points = r.matrix(count, n);
    set.pair_indices.resize(static_cast<std::size_t>(count));
    for (auto& [a, b] : set.pair_indices) {
        a = r.u64();
        b = r.u64();
        if (a >= n0 || b >= n1) throw format_error("boundary file: pair index out of range");
    }
    set.truncated.resize(static_cast<std::size_t>(count));
    for (auto& t : set.truncated) t = r.u8();
    set.class0_rows = r.matrix(n0, n);
    set.class1_rows = r.matrix(n1, n);
    return set;
}

[[nodiscard]] inline BoundaryPointSet load_boundary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open boundary file '" + path + "'");
    return load_boundary(in);
}

/// True when the set was generated by this model. Writes a warning to `warn` otherwise.
inline bool verify_fingerprint(const BoundaryPointSet& set, const Classifier& model, std::ostream* warn = nullptr) {
    const bool ok = set.model_fingerprint == model.fingerprint();
    if (!ok && warn)
        *warn << "warning: boundary set fingerprint " << std::hex << set.model_fingerprint << " does not match model "
              << model.fingerprint() << std::dec << '\n';
    return ok;
}

/// FNV-1a digest of the serialized set, for byte-identity checks.
[[nodiscard]] inline std::uint64_t boundary_digest(const BoundaryPointSet& set) {
    std::ostringstream s(std::ios::binary);
    save_boundary(s, set);
    return fnv1a(s.str());
}

}  // namespace ssba
