#include "feat3d/tensorfile.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "feat3d/errors.hpp"

namespace f3d::io {

namespace {

constexpr char kMagic[4] = {'F', '3', 'D', 'T'};

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint16_t u16() {
        need(2);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint64_t u64() {
        need(8);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 8;
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }
    float f32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 4;
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void raw(char* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw IoError("tensor file truncated: " + path_);
    }
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

Tensor Tensor::from_doubles(std::vector<std::uint64_t> dims, const std::vector<double>& values) {
    Tensor t;
    t.dims = std::move(dims);
    if (t.element_count() != values.size())
        throw ValidationError("tensor: dims do not match value count");
    t.data.reserve(values.size());
    for (const double v : values) t.data.push_back(static_cast<float>(v));
    return t;
}

std::vector<double> Tensor::to_doubles() const {
    return {data.begin(), data.end()};
}

void write_tensor(const std::string& path, const Tensor& tensor) {
    if (tensor.element_count() != tensor.data.size())
        throw ValidationError("tensor: dims do not match payload size");
    std::string buf;
    buf.reserve(8 + 8 * tensor.dims.size() + 4 * tensor.data.size());
    buf.append(kMagic, 4);
    put_u16(buf, kTensorFormatVersion);
    put_u16(buf, static_cast<std::uint16_t>(tensor.dims.size()));
    for (const auto d : tensor.dims) put_u64(buf, d);
    for (const float v : tensor.data) put_f32(buf, v);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();

    Reader r(bytes, path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a tensor file: " + path);
    const std::uint16_t version = r.u16();
    if (version != kTensorFormatVersion)
        throw IoError("unsupported tensor version " + std::to_string(version) + ": " + path);
    const std::uint16_t rank = r.u16();

    Tensor t;
    t.dims.resize(rank);
    for (auto& d : t.dims) d = r.u64();
    const std::uint64_t n = t.element_count();
    if (r.remaining() != n * 4) throw IoError("tensor payload size mismatch: " + path);
    t.data.resize(n);
    for (auto& v : t.data) v = r.f32();
    return t;
}

std::string describe_tensor(const Tensor& tensor, std::size_t max_values) {
    std::ostringstream out;
    out << "dims [";
    for (std::size_t i = 0; i < tensor.dims.size(); ++i)
        out << (i ? ", " : "") << tensor.dims[i];
    out << "] values";
    const std::size_t n = std::min<std::size_t>(tensor.data.size(), max_values);
    for (std::size_t i = 0; i < n; ++i) out << ' ' << tensor.data[i];
    if (n < tensor.data.size()) out << " ... (" << tensor.data.size() << " total)";
    return out.str();
}

}  // namespace f3d::io
