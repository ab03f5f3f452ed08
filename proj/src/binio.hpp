#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "csnet/tensor.hpp"

// Little-endian scalar encoding shared by the dataset and checkpoint formats.
namespace csnet::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_f64s(std::ostream& out, std::span<const double> values) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
}

class Reader {
public:
    Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    template <typename T>
    T get() {
        T value{};
        read(&value, sizeof(T));
        return value;
    }

    void get_f64s(std::span<double> values) { read(values.data(), values.size() * sizeof(double)); }

    std::string get_string(std::size_t n) {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

    [[noreturn]] void fail(const std::string& msg) const { throw FormatError(what_ + ": " + msg); }

private:
    void read(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
    }

    std::istream& in_;
    std::string what_;
};

}  // namespace csnet::binio
