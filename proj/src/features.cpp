#include "occap/features.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "occap/errors.hpp"

namespace occap::corpus {

namespace {

constexpr char kMagic[4] = {'O', 'C', 'F', '1'};

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

float f32_from_le(const unsigned char* p) {
    std::uint32_t bits = read_u32_le(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace

num::Tensor read_ocf(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw DataError("feature file '" + path.string() + "': bad magic, not an OCF1 file");
    }
    const int rank = bytes[4];
    std::size_t off = 5;
    if (bytes.size() < off + 4u * static_cast<std::size_t>(rank)) {
        throw DataError("feature file '" + path.string() + "': truncated header");
    }
    std::vector<int> shape;
    std::size_t count = 1;
    for (int i = 0; i < rank; ++i) {
        std::uint32_t d = read_u32_le(bytes.data() + off);
        off += 4;
        if (d == 0) throw DataError("feature file '" + path.string() + "': zero dimension");
        shape.push_back(static_cast<int>(d));
        count *= d;
    }
    if (bytes.size() != off + 4 * count) {
        throw DataError("feature file '" + path.string() + "': declared shape " + num::shape_to_string(shape) +
                        " needs " + std::to_string(count) + " floats but file holds " +
                        std::to_string((bytes.size() - off) / 4));
    }
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        float f = f32_from_le(bytes.data() + off + 4 * i);
        if (!std::isfinite(f)) {
            throw DataError("feature file '" + path.string() + "': non-finite value at index " + std::to_string(i));
        }
        data[i] = static_cast<double>(f);
    }
    return num::Tensor(std::move(shape), std::move(data));
}

num::Tensor read_ocf(const std::filesystem::path& path, const std::vector<int>& expected_shape) {
    num::Tensor t = read_ocf(path);
    if (t.shape() != expected_shape) {
        throw DataError("feature file '" + path.string() + "': shape " + t.shape_str() + " does not match expected " +
                        num::shape_to_string(expected_shape));
    }
    return t;
}

void write_ocf(const std::filesystem::path& path, const num::Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write feature file '" + path.string() + "'");
    out.write(kMagic, 4);
    const unsigned char rank = static_cast<unsigned char>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), 1);
    for (int d : t.shape()) write_u32_le(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32_le(out, bits);
    }
}

ImageFeatures load_image_features(const ImageEntry& entry, const std::filesystem::path& base_dir, int d_fc,
                                  int grid_n, int d_loc) {
    auto resolve = [&](const std::string& ref) {
        std::filesystem::path p(ref);
        return p.is_absolute() ? p : base_dir / p;
    };
    ImageFeatures f;
    f.fc = read_ocf(resolve(entry.fc_ref), {d_fc});
    f.spatial = read_ocf(resolve(entry.spatial_ref), {grid_n, d_loc});
    return f;
}

} // namespace occap::corpus
