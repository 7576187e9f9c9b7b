#include "dygraph/params.hpp"

#include "dygraph/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace dygraph {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor out(std::move(shape));
    for (auto& v : out.values()) {
        v = rng.uniform(-bound, bound);
    }
    return out;
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
    Tensor out(std::move(shape));
    for (auto& v : out.values()) {
        v = rng.normal(0.0, stddev);
    }
    return out;
}

ad::Var fan_in_parameter(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return ad::Var::parameter(uniform_tensor(std::move(shape), bound, rng));
}

ad::Var zero_parameter(Shape shape) { return ad::Var::parameter(Tensor(std::move(shape), 0.0)); }

ad::Var filled_parameter(Shape shape, double value) { return ad::Var::parameter(Tensor(std::move(shape), value)); }

namespace {

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw LoadError(path.string() + ": truncated archive");
    }
    return value;
}

constexpr char kMagic[4] = {'D', 'Y', 'G', 'A'};
constexpr std::uint64_t kMaxNameLength = 4096;
constexpr std::uint64_t kMaxRank = 8;

} // namespace

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, kArchiveVersion);
    write_pod<std::uint64_t>(out, archive.size());
    for (const auto& [name, tensor] : archive) {
        write_pod<std::uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint64_t>(out, tensor.rank());
        for (auto d : tensor.shape()) {
            write_pod<std::uint64_t>(out, d);
        }
        out.write(reinterpret_cast<const char*>(tensor.ptr()), static_cast<std::streamsize>(tensor.size() * 8));
    }
    if (!out) {
        throw LoadError("write failed: " + path.string());
    }
}

TensorArchive load_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw LoadError(path.string() + ": not a parameter archive");
    }
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != kArchiveVersion) {
        throw LoadError(path.string() + ": unsupported archive version " + std::to_string(version));
    }
    const auto count = read_pod<std::uint64_t>(in, path);
    TensorArchive archive;
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto name_length = read_pod<std::uint64_t>(in, path);
        if (name_length == 0 || name_length > kMaxNameLength) {
            throw LoadError(path.string() + ": corrupt entry name");
        }
        std::string name(name_length, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_length));
        const auto rank = read_pod<std::uint64_t>(in, path);
        if (rank > kMaxRank) {
            throw LoadError(path.string() + ": corrupt rank for " + name);
        }
        Shape shape;
        for (std::uint64_t r = 0; r < rank; ++r) {
            shape.push_back(read_pod<std::uint64_t>(in, path));
        }
        Tensor tensor(shape);
        in.read(reinterpret_cast<char*>(tensor.ptr()), static_cast<std::streamsize>(tensor.size() * 8));
        if (!in) {
            throw LoadError(path.string() + ": truncated data for " + name);
        }
        archive.emplace(std::move(name), std::move(tensor));
    }
    return archive;
}

TensorArchive archive_of(const std::vector<NamedParam>& params, const std::vector<NamedBuffer>& buffers) {
    TensorArchive archive;
    for (const auto& p : params) {
        archive.emplace(p.name, p.var->value());
    }
    for (const auto& b : buffers) {
        archive.emplace(b.name, *b.tensor);
    }
    return archive;
}

void restore_from(const TensorArchive& archive, const std::vector<NamedParam>& params,
                  const std::vector<NamedBuffer>& buffers) {
    std::set<std::string> expected;
    auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
        expected.insert(name);
        const auto it = archive.find(name);
        if (it == archive.end()) {
            throw LoadError("checkpoint is missing '" + name + "'");
        }
        if (it->second.shape() != shape) {
            throw LoadError("checkpoint entry '" + name + "' has shape " + shape_string(it->second.shape()) +
                            ", model expects " + shape_string(shape));
        }
        return it->second;
    };
    // Validate everything before touching the model so a bad archive leaves it intact.
    std::vector<std::pair<Tensor*, const Tensor*>> copies;
    for (const auto& p : params) {
        copies.emplace_back(&p.var->mutable_value(), &fetch(p.name, p.var->shape()));
    }
    for (const auto& b : buffers) {
        copies.emplace_back(b.tensor, &fetch(b.name, b.tensor->shape()));
    }
    for (const auto& [name, tensor] : archive) {
        if (!expected.contains(name)) {
            throw LoadError("checkpoint has unexpected entry '" + name + "'");
        }
    }
    for (auto [dst, src] : copies) {
        *dst = *src;
    }
}

} // namespace dygraph
