#pragma once

#include "dygraph/autograd.hpp"
#include "dygraph/rng.hpp"
#include "dygraph/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dygraph {

/// A trainable tensor under its canonical dotted name (module.path.name).
struct NamedParam {
    std::string name;
    ad::Var* var;
};

/// A non-trainable tensor persisted with the parameters (batch-norm running statistics).
struct NamedBuffer {
    std::string name;
    Tensor* tensor;
};

/// Uniform(-bound, bound) entries.
Tensor uniform_tensor(Shape shape, double bound, Rng& rng);
/// Normal(0, stddev) entries.
Tensor normal_tensor(Shape shape, double stddev, Rng& rng);
/// Trainable tensor with the default fan-in initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ad::Var fan_in_parameter(Shape shape, std::size_t fan_in, Rng& rng);
ad::Var zero_parameter(Shape shape);
ad::Var filled_parameter(Shape shape, double value);

/// Name -> tensor mapping written as a versioned little-endian binary archive:
/// magic "DYGA", u32 version, u64 entry count, then per entry
/// u64 name length, name bytes, u64 rank, u64 dims, f64 data.
using TensorArchive = std::map<std::string, Tensor>;

inline constexpr std::uint32_t kArchiveVersion = 1;

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

/// Snapshot of the named tensors' current values.
TensorArchive archive_of(const std::vector<NamedParam>& params, const std::vector<NamedBuffer>& buffers);
/// Copies archive entries into the named tensors. Every name must be present with a
/// matching shape; extra archive entries are an error too.
void restore_from(const TensorArchive& archive, const std::vector<NamedParam>& params,
                  const std::vector<NamedBuffer>& buffers);

} // namespace dygraph
