#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace f3d::io {

// Minimal binary tensor container:
//   magic "F3DT" | version u16 | rank u16 | dims rank x u64 | payload f32
// All integers and floats little-endian; payload is row-major.
struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> data;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (const auto d : dims) n *= d;
        return dims.empty() ? 0 : n;
    }

    static Tensor from_doubles(std::vector<std::uint64_t> dims, const std::vector<double>& values);
    std::vector<double> to_doubles() const;
};

inline constexpr std::uint16_t kTensorFormatVersion = 1;

void write_tensor(const std::string& path, const Tensor& tensor);
Tensor read_tensor(const std::string& path);

// Human-readable dump used by the CLI debugging subcommand.
std::string describe_tensor(const Tensor& tensor, std::size_t max_values);

}  // namespace f3d::io
