/* C boundary for batched correlation-graph kernels.
 *
 * windows: count * n * w doubles, row-major (window, series, step).
 * out:     count * n * n doubles, caller-allocated.
 * err:     optional buffer receiving a NUL-terminated message on failure.
 *
 * Implementations compute only the upper triangle with the row-major DTW
 * recurrence, mirror it, and write exactly 1.0 on the diagonal, so every
 * implementation is bit-compatible with the reference. They never abort.
 */
#ifndef DYGRAPH_KERNEL_ABI_H
#define DYGRAPH_KERNEL_ABI_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

enum dygraph_kernel_status {
    DYGRAPH_KERNEL_OK = 0,
    DYGRAPH_KERNEL_SIZE_MISMATCH = 1,
    DYGRAPH_KERNEL_INVALID_TAU = 2,
    DYGRAPH_KERNEL_NULL_BUFFER = 3,
    DYGRAPH_KERNEL_INTERNAL = 4
};

typedef int (*dygraph_batch_kernel_fn)(const double* windows, size_t windows_len, size_t count, size_t n,
                                       size_t w, double tau, double* out, size_t out_len, char* err,
                                       size_t err_len);

/* Portable implementation shipped with the library. */
int dygraph_reference_batch_correlation_graphs(const double* windows, size_t windows_len, size_t count, size_t n,
                                               size_t w, double tau, double* out, size_t out_len, char* err,
                                               size_t err_len);

/* Accelerated implementation; linked only when built with DYGRAPH_WITH_NATIVE_KERNEL. */
int dygraph_native_batch_correlation_graphs(const double* windows, size_t windows_len, size_t count, size_t n,
                                            size_t w, double tau, double* out, size_t out_len, char* err,
                                            size_t err_len);

#ifdef __cplusplus
}
#endif

#endif /* DYGRAPH_KERNEL_ABI_H */
