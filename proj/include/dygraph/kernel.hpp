#pragma once

#include "dygraph/kernel_abi.h"
#include "dygraph/tensor.hpp"

#include <string_view>
#include <vector>

namespace dygraph {

enum class KernelMode { Auto, On, Off };

KernelMode parse_kernel_mode(std::string_view text);

/// True when the accelerated kernel was linked into this build.
bool native_kernel_available();

/// Off -> reference; Auto -> native when linked, else reference; On -> native or ConfigError.
dygraph_batch_kernel_fn resolve_batch_kernel(KernelMode mode);

/// Process-wide default used by populate_cache (Auto unless overridden, e.g. by the CLI flag).
void set_default_kernel_mode(KernelMode mode);
KernelMode default_kernel_mode();

/// Runs `kernel` over [N, w] windows and returns [N, N] adjacency matrices.
/// A non-zero status from the kernel is raised as ArgumentError carrying its message.
std::vector<Tensor> batch_correlation_graphs(const std::vector<Tensor>& windows, double tau,
                                             dygraph_batch_kernel_fn kernel);

} // namespace dygraph
