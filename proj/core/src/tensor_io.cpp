#include "modfuse/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace modfuse {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'T', '1'};

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t) {
    if (t.rank() > 255) throw UsageError("tensor rank exceeds MFT1 limit of 255");
    std::vector<std::uint8_t> out;
    out.reserve(5 + 4 * static_cast<std::size_t>(t.rank()) + 4 * t.values().size());
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) put_u32le(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
        put_u32le(out, bits);
    }
    return out;
}

Tensor tensor_from_bytes(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    auto fail = [&origin](const std::string& why) -> DataError {
        return DataError(origin + ": " + why);
    };
    if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw fail("not an MFT1 tensor (bad magic)");
    }
    const int rank = bytes[4];
    if (rank < 1) throw fail("MFT1 rank must be >= 1");
    const std::size_t header = 5 + 4 * static_cast<std::size_t>(rank);
    if (bytes.size() < header) throw fail("truncated MFT1 header");

    std::vector<int> shape(static_cast<std::size_t>(rank));
    std::uint64_t count = 1;
    for (int i = 0; i < rank; ++i) {
        const std::uint32_t d = get_u32le(bytes.data() + 5 + 4 * static_cast<std::size_t>(i));
        if (d == 0 || d > 0x7fffffffu) throw fail("MFT1 dimension out of range");
        shape[static_cast<std::size_t>(i)] = static_cast<int>(d);
        count *= d;
    }
    if (bytes.size() != header + 4 * count) {
        throw fail("MFT1 payload size mismatch: expected " +
                   std::to_string(header + 4 * count) + " bytes, got " +
                   std::to_string(bytes.size()));
    }
    std::vector<float> data(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32le(bytes.data() + header + 4 * i);
        data[i] = std::bit_cast<float>(bits);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    const std::vector<std::uint8_t> bytes = tensor_to_bytes(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failed for " + path.string());
    return tensor_from_bytes(bytes, path.string());
}

}  // namespace modfuse
