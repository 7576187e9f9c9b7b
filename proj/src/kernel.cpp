#include "dygraph/kernel.hpp"

#include "dygraph/errors.hpp"
#include "dygraph/graphs.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <exception>
#include <string>

namespace {

int report(int status, const std::string& message, char* err, size_t err_len) {
    if (err != nullptr && err_len > 0) {
        const size_t len = std::min(err_len - 1, message.size());
        std::memcpy(err, message.data(), len);
        err[len] = '\0';
    }
    return status;
}

std::atomic<dygraph::KernelMode> g_default_mode{dygraph::KernelMode::Auto};

} // namespace

extern "C" int dygraph_reference_batch_correlation_graphs(const double* windows, size_t windows_len, size_t count,
                                                          size_t n, size_t w, double tau, double* out, size_t out_len,
                                                          char* err, size_t err_len) {
    if (count == 0) {
        return DYGRAPH_KERNEL_OK;
    }
    if (windows == nullptr || out == nullptr) {
        return report(DYGRAPH_KERNEL_NULL_BUFFER, "null buffer", err, err_len);
    }
    if (w == 0 || windows_len != count * n * w || out_len != count * n * n) {
        return report(DYGRAPH_KERNEL_SIZE_MISMATCH,
                      "buffer sizes do not match count=" + std::to_string(count) + ", n=" + std::to_string(n) +
                          ", w=" + std::to_string(w),
                      err, err_len);
    }
    if (!(tau > 0.0)) {
        return report(DYGRAPH_KERNEL_INVALID_TAU, "tau must be positive", err, err_len);
    }
    try {
        for (size_t k = 0; k < count; ++k) {
            dygraph::Tensor segment({n, w}, std::vector<double>(windows + k * n * w, windows + (k + 1) * n * w));
            const auto graph = dygraph::correlation_graph(segment, tau);
            std::copy_n(graph.adjacency.ptr(), n * n, out + k * n * n);
        }
    } catch (const std::exception& e) {
        return report(DYGRAPH_KERNEL_INTERNAL, e.what(), err, err_len);
    }
    return DYGRAPH_KERNEL_OK;
}

namespace dygraph {

KernelMode parse_kernel_mode(std::string_view text) {
    if (text == "auto") {
        return KernelMode::Auto;
    }
    if (text == "on") {
        return KernelMode::On;
    }
    if (text == "off") {
        return KernelMode::Off;
    }
    throw ConfigError("kernel mode must be auto, on or off, got '" + std::string(text) + "'");
}

bool native_kernel_available() {
#ifdef DYGRAPH_WITH_NATIVE_KERNEL
    return true;
#else
    return false;
#endif
}

dygraph_batch_kernel_fn resolve_batch_kernel(KernelMode mode) {
    switch (mode) {
    case KernelMode::Off:
        return &dygraph_reference_batch_correlation_graphs;
    case KernelMode::Auto:
#ifdef DYGRAPH_WITH_NATIVE_KERNEL
        return &dygraph_native_batch_correlation_graphs;
#else
        return &dygraph_reference_batch_correlation_graphs;
#endif
    case KernelMode::On:
#ifdef DYGRAPH_WITH_NATIVE_KERNEL
        return &dygraph_native_batch_correlation_graphs;
#else
        throw ConfigError("native kernel requested but this build does not include it");
#endif
    }
    throw ConfigError("unknown kernel mode");
}

void set_default_kernel_mode(KernelMode mode) { g_default_mode = mode; }

KernelMode default_kernel_mode() { return g_default_mode.load(); }

std::vector<Tensor> batch_correlation_graphs(const std::vector<Tensor>& windows, double tau,
                                             dygraph_batch_kernel_fn kernel) {
    if (windows.empty()) {
        return {};
    }
    const std::size_t n = windows.front().dim(0);
    const std::size_t w = windows.front().dim(1);
    std::vector<double> flat;
    flat.reserve(windows.size() * n * w);
    for (const auto& window : windows) {
        if (window.rank() != 2 || window.dim(0) != n || window.dim(1) != w) {
            throw ArgumentError("batch_correlation_graphs: windows differ in shape");
        }
        flat.insert(flat.end(), window.values().begin(), window.values().end());
    }
    std::vector<double> out(windows.size() * n * n);
    char message[256] = {};
    const int status =
        kernel(flat.data(), flat.size(), windows.size(), n, w, tau, out.data(), out.size(), message, sizeof message);
    if (status != DYGRAPH_KERNEL_OK) {
        throw ArgumentError("graph kernel failed (status " + std::to_string(status) + "): " + message);
    }
    std::vector<Tensor> graphs;
    graphs.reserve(windows.size());
    for (std::size_t k = 0; k < windows.size(); ++k) {
        graphs.emplace_back(Shape{n, n}, std::vector<double>(out.begin() + static_cast<long>(k * n * n),
                                                             out.begin() + static_cast<long>((k + 1) * n * n)));
    }
    return graphs;
}

} // namespace dygraph
