#include "dygraph/autograd.hpp"

#include "dygraph/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace dygraph::ad {

double* Node::grad_buffer() {
    if (grad.empty()) {
        grad.assign(value.size(), 0.0);
    }
    return grad.data();
}

Var Var::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (auto& input : inputs) {
        if (!input.defined()) {
            node->parents.push_back(nullptr);
            continue;
        }
        node->requires_grad = node->requires_grad || input.requires_grad();
        node->parents.push_back(input.node());
    }
    if (node->requires_grad) {
        node->backward_fn = std::move(backward_fn);
    } else {
        node->parents.clear();
    }
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (root.value().size() != 1) {
        throw ArgumentError("backward() needs a scalar root, got shape " + shape_string(root.shape()));
    }
    if (!root.requires_grad()) {
        return;
    }
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent != nullptr && parent->requires_grad && !visited.contains(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }
    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) {
            node->backward_fn(*node);
        }
    }
    // Interior nodes hold their gradient only for the duration of the sweep.
    for (Node* node : order) {
        if (node->backward_fn) {
            node->grad.clear();
            node->grad.shrink_to_fit();
        }
    }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ArgumentError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
    }
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
    if (a.value().rank() != rank) {
        throw ArgumentError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                            shape_string(a.shape()));
    }
}

Node* parent_if_needed(Node& self, std::size_t index) {
    Node* parent = self.parents[index].get();
    return (parent != nullptr && parent->requires_grad) ? parent : nullptr;
}

template <typename Forward, typename Derivative>
Var unary(const Var& a, Forward forward, Derivative derivative) {
    Tensor out(a.shape());
    const double* x = a.value().ptr();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = forward(x[i]);
    }
    return make_result(std::move(out), {a}, [derivative](Node& self) {
        Node* pa = parent_if_needed(self, 0);
        if (pa == nullptr) {
            return;
        }
        double* ga = pa->grad_buffer();
        const double* xa = pa->value.ptr();
        const double* y = self.value.ptr();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga[i] += self.grad[i] * derivative(xa[i], y[i]);
        }
    });
}

} // namespace

Var add(const Var& a, const Var& b) { return add_scaled(a, 1.0, b, 1.0); }

Var sub(const Var& a, const Var& b) { return add_scaled(a, 1.0, b, -1.0); }

Var add_scaled(const Var& a, double alpha, const Var& b, double beta) {
    require_same_shape(a, b, "add_scaled");
    Tensor out(a.shape());
    const double* x = a.value().ptr();
    const double* y = b.value().ptr();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = alpha * x[i] + beta * y[i];
    }
    return make_result(std::move(out), {a, b}, [alpha, beta](Node& self) {
        if (Node* pa = parent_if_needed(self, 0)) {
            double* g = pa->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i] += alpha * self.grad[i];
            }
        }
        if (Node* pb = parent_if_needed(self, 1)) {
            double* g = pb->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i] += beta * self.grad[i];
            }
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.value()[i] * b.value()[i];
    }
    return make_result(std::move(out), {a, b}, [](Node& self) {
        Node* pa = parent_if_needed(self, 0);
        Node* pb = parent_if_needed(self, 1);
        const Tensor& va = self.parents[0]->value;
        const Tensor& vb = self.parents[1]->value;
        if (pa != nullptr) {
            double* g = pa->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i] += self.grad[i] * vb[i];
            }
        }
        if (pb != nullptr) {
            double* g = pb->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i] += self.grad[i] * va[i];
            }
        }
    });
}

Var scale(const Var& a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var tanh(const Var& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var gelu(const Var& a) {
    constexpr double k = 0.7978845608028654; // sqrt(2/pi)
    constexpr double c = 0.044715;
    return unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
        [](double x, double) {
            const double t = std::tanh(k * (x + c * x * x * x));
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * c * x * x);
        });
}

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), {a}, [](Node& self) {
        if (Node* pa = parent_if_needed(self, 0)) {
            double* g = pa->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i] += self.grad[i];
            }
        }
    });
}

Var transpose_last2(const Var& a) {
    const auto& shape = a.shape();
    if (shape.size() < 2) {
        throw ArgumentError("transpose_last2: rank < 2");
    }
    const std::size_t rows = shape[shape.size() - 2];
    const std::size_t cols = shape.back();
    const std::size_t batch = a.value().size() / (rows * cols);
    Shape out_shape = shape;
    std::swap(out_shape[out_shape.size() - 2], out_shape.back());
    Tensor out(out_shape);
    const double* x = a.value().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                out[b * rows * cols + c * rows + r] = x[b * rows * cols + r * cols + c];
            }
        }
    }
    return make_result(std::move(out), {a}, [batch, rows, cols](Node& self) {
        if (Node* pa = parent_if_needed(self, 0)) {
            double* g = pa->grad_buffer();
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        g[b * rows * cols + r * cols + c] += self.grad[b * rows * cols + c * rows + r];
                    }
                }
            }
        }
    });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) {
        throw ArgumentError("concat: no inputs");
    }
    Shape out_shape = parts.front().shape();
    if (axis >= out_shape.size()) {
        throw ArgumentError("concat: axis out of range");
    }
    out_shape[axis] = 0;
    for (const auto& part : parts) {
        Shape s = part.shape();
        if (s.size() != out_shape.size()) {
            throw ArgumentError("concat: rank mismatch");
        }
        out_shape[axis] += s[axis];
        s[axis] = out_shape[axis];
        if (s != out_shape) {
            throw ArgumentError("concat: shape mismatch off the concat axis");
        }
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= out_shape[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < out_shape.size(); ++i) {
        inner *= out_shape[i];
    }
    const std::size_t out_row = out_shape[axis] * inner;
    Tensor out(out_shape);
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& part : parts) {
        offsets.push_back(offset);
        const std::size_t row = part.dim(axis) * inner;
        const double* x = part.value().ptr();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(x + o * row, row, out.ptr() + o * out_row + offset);
        }
        offset += row;
    }
    return make_result(std::move(out), parts, [offsets, outer, inner, out_row, axis](Node& self) {
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            Node* parent = parent_if_needed(self, p);
            if (parent == nullptr) {
                continue;
            }
            const std::size_t row = parent->value.dim(axis) * inner;
            double* g = parent->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
                const double* src = self.grad.data() + o * out_row + offsets[p];
                for (std::size_t i = 0; i < row; ++i) {
                    g[o * row + i] += src[i];
                }
            }
        }
    });
}

Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t length) {
    const Shape& shape = a.shape();
    if (axis >= shape.size() || start + length > shape[axis]) {
        throw ArgumentError("slice: range out of bounds for shape " + shape_string(shape));
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= shape[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        inner *= shape[i];
    }
    Shape out_shape = shape;
    out_shape[axis] = length;
    Tensor out(out_shape);
    const std::size_t in_row = shape[axis] * inner;
    const std::size_t out_row = length * inner;
    const double* x = a.value().ptr();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(x + o * in_row + start * inner, out_row, out.ptr() + o * out_row);
    }
    return make_result(std::move(out), {a}, [outer, in_row, out_row, start, inner](Node& self) {
        if (Node* pa = parent_if_needed(self, 0)) {
            double* g = pa->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < out_row; ++i) {
                    g[o * in_row + start * inner + i] += self.grad[o * out_row + i];
                }
            }
        }
    });
}

Var add_trailing(const Var& a, const Var& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sb.size() > sa.size() || !std::equal(sb.begin(), sb.end(), sa.end() - static_cast<long>(sb.size()))) {
        throw ArgumentError("add_trailing: " + shape_string(sb) + " is not a suffix of " + shape_string(sa));
    }
    const std::size_t inner = b.value().size();
    const std::size_t outer = a.value().size() / inner;
    Tensor out(sa);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            out[o * inner + i] = a.value()[o * inner + i] + b.value()[i];
        }
    }
    return make_result(std::move(out), {a, b}, [outer, inner](Node& self) {
        if (Node* pa = parent_if_needed(self, 0)) {
            double* g = pa->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i] += self.grad[i];
            }
        }
        if (Node* pb = parent_if_needed(self, 1)) {
            double* g = pb->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < inner; ++i) {
                    g[i] += self.grad[o * inner + i];
                }
            }
        }
    });
}

Var sum(const Var& a) {
    double total = 0.0;
    for (double x : a.value().values()) {
        total += x;
    }
    return make_result(Tensor({1}, {total}), {a}, [](Node& self) {
        if (Node* pa = parent_if_needed(self, 0)) {
            double* g = pa->grad_buffer();
            for (std::size_t i = 0; i < pa->value.size(); ++i) {
                g[i] += self.grad[0];
            }
        }
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var mean_axis(const Var& a, std::size_t axis) {
    const Shape& shape = a.shape();
    if (axis >= shape.size()) {
        throw ArgumentError("mean_axis: axis out of range");
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= shape[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        inner *= shape[i];
    }
    const std::size_t len = shape[axis];
    Shape out_shape = shape;
    out_shape.erase(out_shape.begin() + static_cast<long>(axis));
    if (out_shape.empty()) {
        out_shape.push_back(1);
    }
    Tensor out(out_shape);
    const double inv = 1.0 / static_cast<double>(len);
    const double* x = a.value().ptr();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t l = 0; l < len; ++l) {
            for (std::size_t i = 0; i < inner; ++i) {
                out[o * inner + i] += x[(o * len + l) * inner + i];
            }
        }
    }
    for (auto& v : out.values()) {
        v *= inv;
    }
    return make_result(std::move(out), {a}, [outer, inner, len, inv](Node& self) {
        if (Node* pa = parent_if_needed(self, 0)) {
            double* g = pa->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t l = 0; l < len; ++l) {
                    for (std::size_t i = 0; i < inner; ++i) {
                        g[(o * len + l) * inner + i] += inv * self.grad[o * inner + i];
                    }
                }
            }
        }
    });
}

Var mean_squared_error(const Var& pred, const Var& target) {
    require_same_shape(pred, target, "mean_squared_error");
    const std::size_t n = pred.value().size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = pred.value()[i] - target.value()[i];
        total += diff * diff;
    }
    const double inv = 1.0 / static_cast<double>(n);
    return make_result(Tensor({1}, {total * inv}), {pred, target}, [inv](Node& self) {
        const Tensor& p = self.parents[0]->value;
        const Tensor& t = self.parents[1]->value;
        const double g0 = 2.0 * inv * self.grad[0];
        if (Node* pp = parent_if_needed(self, 0)) {
            double* g = pp->grad_buffer();
            for (std::size_t i = 0; i < p.size(); ++i) {
                g[i] += g0 * (p[i] - t[i]);
            }
        }
        if (Node* pt = parent_if_needed(self, 1)) {
            double* g = pt->grad_buffer();
            for (std::size_t i = 0; i < p.size(); ++i) {
                g[i] -= g0 * (p[i] - t[i]);
            }
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw ArgumentError("matmul: inner dimensions differ: " + shape_string(a.shape()) + " x " +
                            shape_string(b.shape()));
    }
    Tensor out({m, n});
    const double* x = a.value().ptr();
    const double* y = b.value().ptr();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += xv * y[p * n + j];
            }
        }
    }
    return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
        const double* x = self.parents[0]->value.ptr();
        const double* y = self.parents[1]->value.ptr();
        const double* go = self.grad.data();
        if (Node* pa = parent_if_needed(self, 0)) {
            double* g = pa->grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += go[i * n + j] * y[p * n + j];
                    }
                    g[i * k + p] += acc;
                }
            }
        }
        if (Node* pb = parent_if_needed(self, 1)) {
            double* g = pb->grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double xv = x[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) {
                        g[p * n + j] += xv * go[i * n + j];
                    }
                }
            }
        }
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    require_rank(weight, 2, "linear");
    const std::size_t out_dim = weight.dim(0);
    const std::size_t in_dim = weight.dim(1);
    if (x.shape().empty() || x.shape().back() != in_dim) {
        throw ArgumentError("linear: input " + shape_string(x.shape()) + " does not end in " +
                            std::to_string(in_dim));
    }
    if (bias.defined() && bias.value().size() != out_dim) {
        throw ArgumentError("linear: bias size mismatch");
    }
    const std::size_t rows = x.value().size() / in_dim;
    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    Tensor out(out_shape);
    const double* xv = x.value().ptr();
    const double* w = weight.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = bias.defined() ? bias.value()[o] : 0.0;
            for (std::size_t i = 0; i < in_dim; ++i) {
                acc += w[o * in_dim + i] * xv[r * in_dim + i];
            }
            out[r * out_dim + o] = acc;
        }
    }
    return make_result(std::move(out), {x, weight, bias}, [rows, in_dim, out_dim](Node& self) {
        const double* xv = self.parents[0]->value.ptr();
        const double* w = self.parents[1]->value.ptr();
        const double* go = self.grad.data();
        if (Node* px = parent_if_needed(self, 0)) {
            double* g = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const double gv = go[r * out_dim + o];
                    for (std::size_t i = 0; i < in_dim; ++i) {
                        g[r * in_dim + i] += gv * w[o * in_dim + i];
                    }
                }
            }
        }
        if (Node* pw = parent_if_needed(self, 1)) {
            double* g = pw->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const double gv = go[r * out_dim + o];
                    for (std::size_t i = 0; i < in_dim; ++i) {
                        g[o * in_dim + i] += gv * xv[r * in_dim + i];
                    }
                }
            }
        }
        if (Node* pb = parent_if_needed(self, 2)) {
            double* g = pb->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t o = 0; o < out_dim; ++o) {
                    g[o] += go[r * out_dim + o];
                }
            }
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const std::size_t width = x.shape().back();
    if (gamma.value().size() != width || beta.value().size() != width) {
        throw ArgumentError("layer_norm: affine parameter size mismatch");
    }
    const std::size_t rows = x.value().size() / width;
    Tensor out(x.shape());
    std::vector<double> normalized(x.value().size());
    std::vector<double> inv_std(rows);
    const double* xv = x.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
            mu += xv[r * width + i];
        }
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
            const double d = xv[r * width + i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(width);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < width; ++i) {
            const double xh = (xv[r * width + i] - mu) * inv_std[r];
            normalized[r * width + i] = xh;
            out[r * width + i] = xh * gamma.value()[i] + beta.value()[i];
        }
    }
    return make_result(std::move(out), {x, gamma, beta},
                       [rows, width, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                           const double* gam = self.parents[1]->value.ptr();
                           const double* go = self.grad.data();
                           if (Node* px = parent_if_needed(self, 0)) {
                               double* g = px->grad_buffer();
                               std::vector<double> dxh(width);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double mean_d = 0.0;
                                   double mean_dx = 0.0;
                                   for (std::size_t i = 0; i < width; ++i) {
                                       dxh[i] = go[r * width + i] * gam[i];
                                       mean_d += dxh[i];
                                       mean_dx += dxh[i] * normalized[r * width + i];
                                   }
                                   mean_d /= static_cast<double>(width);
                                   mean_dx /= static_cast<double>(width);
                                   for (std::size_t i = 0; i < width; ++i) {
                                       g[r * width + i] +=
                                           inv_std[r] * (dxh[i] - mean_d - normalized[r * width + i] * mean_dx);
                                   }
                               }
                           }
                           if (Node* pg = parent_if_needed(self, 1)) {
                               double* g = pg->grad_buffer();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t i = 0; i < width; ++i) {
                                       g[i] += go[r * width + i] * normalized[r * width + i];
                                   }
                               }
                           }
                           if (Node* pb = parent_if_needed(self, 2)) {
                               double* g = pb->grad_buffer();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t i = 0; i < width; ++i) {
                                       g[i] += go[r * width + i];
                                   }
                               }
                           }
                       });
}

Var causal_attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
    require_rank(q, 3, "causal_attention");
    require_same_shape(q, k, "causal_attention");
    require_same_shape(q, v, "causal_attention");
    const std::size_t groups = q.dim(0);
    const std::size_t seq = q.dim(1);
    const std::size_t width = q.dim(2);
    if (heads == 0 || width % heads != 0) {
        throw ArgumentError("causal_attention: heads must divide the model width");
    }
    const std::size_t head_dim = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    // probs[g][h][i][j], j <= i
    std::vector<double> probs(groups * heads * seq * seq, 0.0);
    Tensor out(q.shape());
    const double* qv = q.value().ptr();
    const double* kv = k.value().ptr();
    const double* vv = v.value().ptr();
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < seq; ++i) {
                double* p = probs.data() + ((g * heads + h) * seq + i) * seq;
                const double* qi = qv + (g * seq + i) * width + h * head_dim;
                double peak = -INFINITY;
                for (std::size_t j = 0; j <= i; ++j) {
                    const double* kj = kv + (g * seq + j) * width + h * head_dim;
                    double dot = 0.0;
                    for (std::size_t e = 0; e < head_dim; ++e) {
                        dot += qi[e] * kj[e];
                    }
                    p[j] = dot * inv_sqrt;
                    peak = std::max(peak, p[j]);
                }
                double total = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    p[j] = std::exp(p[j] - peak);
                    total += p[j];
                }
                double* oi = out.ptr() + (g * seq + i) * width + h * head_dim;
                for (std::size_t j = 0; j <= i; ++j) {
                    p[j] /= total;
                    const double* vj = vv + (g * seq + j) * width + h * head_dim;
                    for (std::size_t e = 0; e < head_dim; ++e) {
                        oi[e] += p[j] * vj[e];
                    }
                }
            }
        }
    }
    return make_result(
        std::move(out), {q, k, v},
        [groups, seq, width, heads, head_dim, inv_sqrt, probs = std::move(probs)](Node& self) {
            const double* qv = self.parents[0]->value.ptr();
            const double* kv = self.parents[1]->value.ptr();
            const double* vv = self.parents[2]->value.ptr();
            Node* pq = parent_if_needed(self, 0);
            Node* pk = parent_if_needed(self, 1);
            Node* pv = parent_if_needed(self, 2);
            double* gq = pq ? pq->grad_buffer() : nullptr;
            double* gk = pk ? pk->grad_buffer() : nullptr;
            double* gv = pv ? pv->grad_buffer() : nullptr;
            std::vector<double> dp(seq);
            for (std::size_t g = 0; g < groups; ++g) {
                for (std::size_t h = 0; h < heads; ++h) {
                    for (std::size_t i = 0; i < seq; ++i) {
                        const double* p = probs.data() + ((g * heads + h) * seq + i) * seq;
                        const double* go = self.grad.data() + (g * seq + i) * width + h * head_dim;
                        double weighted = 0.0;
                        for (std::size_t j = 0; j <= i; ++j) {
                            const std::size_t off = (g * seq + j) * width + h * head_dim;
                            double dot = 0.0;
                            for (std::size_t e = 0; e < head_dim; ++e) {
                                dot += go[e] * vv[off + e];
                                if (gv != nullptr) {
                                    gv[off + e] += p[j] * go[e];
                                }
                            }
                            dp[j] = dot;
                            weighted += p[j] * dot;
                        }
                        const std::size_t qi_off = (g * seq + i) * width + h * head_dim;
                        for (std::size_t j = 0; j <= i; ++j) {
                            const double ds = p[j] * (dp[j] - weighted) * inv_sqrt;
                            const std::size_t kj_off = (g * seq + j) * width + h * head_dim;
                            for (std::size_t e = 0; e < head_dim; ++e) {
                                if (gq != nullptr) {
                                    gq[qi_off + e] += ds * kv[kj_off + e];
                                }
                                if (gk != nullptr) {
                                    gk[kj_off + e] += ds * qv[qi_off + e];
                                }
                            }
                        }
                    }
                }
            }
        });
}

Var l2_normalize_rows(const Var& x, double eps) {
    const std::size_t width = x.shape().back();
    const std::size_t rows = x.value().size() / width;
    Tensor out(x.shape());
    std::vector<double> norms(rows);
    const double* xv = x.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
            sq += xv[r * width + i] * xv[r * width + i];
        }
        norms[r] = std::sqrt(sq);
        const double denom = norms[r] + eps;
        for (std::size_t i = 0; i < width; ++i) {
            out[r * width + i] = xv[r * width + i] / denom;
        }
    }
    return make_result(std::move(out), {x}, [rows, width, eps, norms = std::move(norms)](Node& self) {
        Node* px = parent_if_needed(self, 0);
        if (px == nullptr) {
            return;
        }
        double* g = px->grad_buffer();
        const double* xv = px->value.ptr();
        const double* go = self.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double n = norms[r];
            const double denom = n + eps;
            double dot = 0.0;
            for (std::size_t i = 0; i < width; ++i) {
                dot += go[r * width + i] * xv[r * width + i];
            }
            // d/dx [x / (|x| + eps)] = I/denom - x x^T / (|x| denom^2)
            const double coef = n > 0.0 ? dot / (n * denom * denom) : 0.0;
            for (std::size_t i = 0; i < width; ++i) {
                g[r * width + i] += go[r * width + i] / denom - coef * xv[r * width + i];
            }
        }
    });
}

Var gram_unit_diagonal(const Var& j) {
    require_rank(j, 3, "gram_unit_diagonal");
    const std::size_t batch = j.dim(0);
    const std::size_t n = j.dim(1);
    const std::size_t width = j.dim(2);
    Tensor out({batch, n, n});
    const double* jv = j.value().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < n; ++r) {
            out[(b * n + r) * n + r] = 1.0;
            for (std::size_t c = r + 1; c < n; ++c) {
                double dot = 0.0;
                for (std::size_t e = 0; e < width; ++e) {
                    dot += jv[(b * n + r) * width + e] * jv[(b * n + c) * width + e];
                }
                out[(b * n + r) * n + c] = dot;
                out[(b * n + c) * n + r] = dot;
            }
        }
    }
    return make_result(std::move(out), {j}, [batch, n, width](Node& self) {
        Node* pj = parent_if_needed(self, 0);
        if (pj == nullptr) {
            return;
        }
        double* g = pj->grad_buffer();
        const double* jv = pj->value.ptr();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    if (r == c) {
                        continue;
                    }
                    const double go = self.grad[(b * n + r) * n + c];
                    for (std::size_t e = 0; e < width; ++e) {
                        g[(b * n + r) * width + e] += go * jv[(b * n + c) * width + e];
                        g[(b * n + c) * width + e] += go * jv[(b * n + r) * width + e];
                    }
                }
            }
        }
    });
}

Var gated_mix(const Var& gate, const Var& x, const Var& y) {
    require_rank(gate, 2, "gated_mix");
    const std::size_t n = gate.dim(0);
    const std::size_t nn = n * n;
    auto batch_of = [&](const Var& v) -> std::size_t {
        if (v.value().rank() == 2 && v.dim(0) == n && v.dim(1) == n) {
            return 0;
        }
        if (v.value().rank() == 3 && v.dim(1) == n && v.dim(2) == n) {
            return v.dim(0);
        }
        throw ArgumentError("gated_mix: operand " + shape_string(v.shape()) + " incompatible with gate " +
                            shape_string(gate.shape()));
    };
    const std::size_t bx = batch_of(x);
    const std::size_t by = batch_of(y);
    if (bx != 0 && by != 0 && bx != by) {
        throw ArgumentError("gated_mix: batch sizes differ");
    }
    const std::size_t batch = std::max<std::size_t>({bx, by, 1});
    std::vector<double> s(nn);
    for (std::size_t i = 0; i < nn; ++i) {
        s[i] = 1.0 / (1.0 + std::exp(-gate.value()[i]));
    }
    Tensor out({batch, n, n});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xv = x.value().ptr() + (bx ? b * nn : 0);
        const double* yv = y.value().ptr() + (by ? b * nn : 0);
        for (std::size_t i = 0; i < nn; ++i) {
            // y + s (x - y) returns y bit-exactly wherever x == y (unit diagonals stay 1).
            out[b * nn + i] = yv[i] + s[i] * (xv[i] - yv[i]);
        }
    }
    return make_result(std::move(out), {gate, x, y}, [batch, nn, bx, by, s = std::move(s)](Node& self) {
        const double* xv = self.parents[1]->value.ptr();
        const double* yv = self.parents[2]->value.ptr();
        Node* pg = parent_if_needed(self, 0);
        Node* px = parent_if_needed(self, 1);
        Node* py = parent_if_needed(self, 2);
        double* gg = pg ? pg->grad_buffer() : nullptr;
        double* gx = px ? px->grad_buffer() : nullptr;
        double* gy = py ? py->grad_buffer() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t ox = bx ? b * nn : 0;
            const std::size_t oy = by ? b * nn : 0;
            for (std::size_t i = 0; i < nn; ++i) {
                const double go = self.grad[b * nn + i];
                if (gg != nullptr) {
                    gg[i] += go * (xv[ox + i] - yv[oy + i]) * s[i] * (1.0 - s[i]);
                }
                if (gx != nullptr) {
                    gx[ox + i] += go * s[i];
                }
                if (gy != nullptr) {
                    gy[oy + i] += go * (1.0 - s[i]);
                }
            }
        }
    });
}

Var self_loop_row_normalize(const Var& adjacency) {
    require_rank(adjacency, 3, "self_loop_row_normalize");
    const std::size_t batch = adjacency.dim(0);
    const std::size_t n = adjacency.dim(1);
    if (adjacency.dim(2) != n) {
        throw ArgumentError("self_loop_row_normalize: adjacency must be square");
    }
    Tensor out(adjacency.shape());
    std::vector<double> row_sums(batch * n);
    const double* a = adjacency.value().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            double total = 1.0;
            for (std::size_t j = 0; j < n; ++j) {
                total += a[(b * n + i) * n + j];
            }
            if (!(total > 0.0)) {
                throw ArgumentError("self_loop_row_normalize: non-positive row sum");
            }
            row_sums[b * n + i] = total;
            for (std::size_t j = 0; j < n; ++j) {
                out[(b * n + i) * n + j] = (a[(b * n + i) * n + j] + (i == j ? 1.0 : 0.0)) / total;
            }
        }
    }
    return make_result(std::move(out), {adjacency}, [batch, n, row_sums = std::move(row_sums)](Node& self) {
        Node* pa = parent_if_needed(self, 0);
        if (pa == nullptr) {
            return;
        }
        double* g = pa->grad_buffer();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t row = (b * n + i) * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    dot += self.grad[row + j] * self.value[row + j];
                }
                // out_ij = (a_ij + I_ij) / s_i with s_i = 1 + sum_j a_ij
                for (std::size_t j = 0; j < n; ++j) {
                    g[row + j] += (self.grad[row + j] - dot) / row_sums[b * n + i];
                }
            }
        }
    });
}

Var node_propagate(const Var& propagation, const Var& features) {
    require_rank(propagation, 3, "node_propagate");
    require_rank(features, 4, "node_propagate");
    const std::size_t batch = features.dim(0);
    const std::size_t channels = features.dim(1);
    const std::size_t n = features.dim(2);
    const std::size_t steps = features.dim(3);
    if (propagation.dim(0) != batch || propagation.dim(1) != n || propagation.dim(2) != n) {
        throw ArgumentError("node_propagate: propagation " + shape_string(propagation.shape()) +
                            " does not match features " + shape_string(features.shape()));
    }
    Tensor out(features.shape());
    const double* p = propagation.value().ptr();
    const double* h = features.value().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double* hb = h + (b * channels + c) * n * steps;
            double* ob = out.ptr() + (b * channels + c) * n * steps;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double pij = p[(b * n + i) * n + j];
                    for (std::size_t t = 0; t < steps; ++t) {
                        ob[i * steps + t] += pij * hb[j * steps + t];
                    }
                }
            }
        }
    }
    return make_result(std::move(out), {propagation, features}, [batch, channels, n, steps](Node& self) {
        const double* p = self.parents[0]->value.ptr();
        const double* h = self.parents[1]->value.ptr();
        Node* pp = parent_if_needed(self, 0);
        Node* ph = parent_if_needed(self, 1);
        double* gp = pp ? pp->grad_buffer() : nullptr;
        double* gh = ph ? ph->grad_buffer() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t base = (b * channels + c) * n * steps;
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double pij = p[(b * n + i) * n + j];
                        double acc = 0.0;
                        for (std::size_t t = 0; t < steps; ++t) {
                            const double go = self.grad[base + i * steps + t];
                            acc += go * h[base + j * steps + t];
                            if (gh != nullptr) {
                                gh[base + j * steps + t] += pij * go;
                            }
                        }
                        if (gp != nullptr) {
                            gp[(b * n + i) * n + j] += acc;
                        }
                    }
                }
            }
        }
    });
}

Var pairwise_sum(const Var& u, const Var& v, const Var& bias) {
    require_rank(u, 2, "pairwise_sum");
    require_same_shape(u, v, "pairwise_sum");
    const std::size_t n = u.dim(0);
    const std::size_t width = u.dim(1);
    if (bias.value().size() != width) {
        throw ArgumentError("pairwise_sum: bias size mismatch");
    }
    Tensor out({n, n, width});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t e = 0; e < width; ++e) {
                out[(i * n + j) * width + e] = u.value()[i * width + e] + v.value()[j * width + e] + bias.value()[e];
            }
        }
    }
    return make_result(std::move(out), {u, v, bias}, [n, width](Node& self) {
        Node* pu = parent_if_needed(self, 0);
        Node* pv = parent_if_needed(self, 1);
        Node* pb = parent_if_needed(self, 2);
        double* gu = pu ? pu->grad_buffer() : nullptr;
        double* gv = pv ? pv->grad_buffer() : nullptr;
        double* gb = pb ? pb->grad_buffer() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t e = 0; e < width; ++e) {
                    const double go = self.grad[(i * n + j) * width + e];
                    if (gu != nullptr) {
                        gu[i * width + e] += go;
                    }
                    if (gv != nullptr) {
                        gv[j * width + e] += go;
                    }
                    if (gb != nullptr) {
                        gb[e] += go;
                    }
                }
            }
        }
    });
}

Var pointwise_channels(const Var& x, const Var& weight, const Var& bias) {
    require_rank(x, 3, "pointwise_channels");
    const std::size_t batch = x.dim(0);
    const std::size_t n = x.dim(1);
    const std::size_t steps = x.dim(2);
    const std::size_t channels = weight.value().size();
    if (bias.value().size() != channels) {
        throw ArgumentError("pointwise_channels: bias size mismatch");
    }
    const std::size_t plane = n * steps;
    Tensor out({batch, channels, n, steps});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.value().ptr() + b * plane;
        for (std::size_t c = 0; c < channels; ++c) {
            const double w = weight.value()[c];
            const double bb = bias.value()[c];
            double* ob = out.ptr() + (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                ob[i] = w * xb[i] + bb;
            }
        }
    }
    return make_result(std::move(out), {x, weight, bias}, [batch, channels, plane](Node& self) {
        const double* x = self.parents[0]->value.ptr();
        const double* w = self.parents[1]->value.ptr();
        Node* px = parent_if_needed(self, 0);
        Node* pw = parent_if_needed(self, 1);
        Node* pb = parent_if_needed(self, 2);
        double* gx = px ? px->grad_buffer() : nullptr;
        double* gw = pw ? pw->grad_buffer() : nullptr;
        double* gb = pb ? pb->grad_buffer() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < channels; ++c) {
                const double* go = self.grad.data() + (b * channels + c) * plane;
                double acc_w = 0.0;
                double acc_b = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    acc_w += go[i] * x[b * plane + i];
                    acc_b += go[i];
                    if (gx != nullptr) {
                        gx[b * plane + i] += go[i] * w[c];
                    }
                }
                if (gw != nullptr) {
                    gw[c] += acc_w;
                }
                if (gb != nullptr) {
                    gb[c] += acc_b;
                }
            }
        }
    });
}

Var temporal_conv(const Var& x, const Var& weight, const Var& bias, std::size_t dilation) {
    require_rank(x, 4, "temporal_conv");
    require_rank(weight, 3, "temporal_conv");
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t n = x.dim(2);
    const std::size_t steps = x.dim(3);
    const std::size_t cout = weight.dim(0);
    const std::size_t kernel = weight.dim(2);
    if (weight.dim(1) != cin) {
        throw ArgumentError("temporal_conv: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                            std::to_string(cin));
    }
    if (bias.defined() && bias.value().size() != cout) {
        throw ArgumentError("temporal_conv: bias size mismatch");
    }
    if (dilation == 0) {
        throw ArgumentError("temporal_conv: dilation must be positive");
    }
    const std::size_t pad = (kernel - 1) * dilation;
    Tensor out({batch, cout, n, steps});
    const double* xv = x.value().ptr();
    const double* w = weight.value().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < cout; ++o) {
            double* ob = out.ptr() + (b * cout + o) * n * steps;
            if (bias.defined()) {
                std::fill_n(ob, n * steps, bias.value()[o]);
            }
            for (std::size_t c = 0; c < cin; ++c) {
                const double* xb = xv + (b * cin + c) * n * steps;
                for (std::size_t kk = 0; kk < kernel; ++kk) {
                    const double wk = w[(o * cin + c) * kernel + kk];
                    // input index = t - pad + kk * dilation
                    const std::size_t shift = pad - kk * dilation;
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t t = shift; t < steps; ++t) {
                            ob[i * steps + t] += wk * xb[i * steps + t - shift];
                        }
                    }
                }
            }
        }
    }
    return make_result(std::move(out), {x, weight, bias},
                       [batch, cin, cout, n, steps, kernel, dilation, pad](Node& self) {
                           const double* xv = self.parents[0]->value.ptr();
                           const double* w = self.parents[1]->value.ptr();
                           Node* px = parent_if_needed(self, 0);
                           Node* pw = parent_if_needed(self, 1);
                           Node* pb = parent_if_needed(self, 2);
                           double* gx = px ? px->grad_buffer() : nullptr;
                           double* gw = pw ? pw->grad_buffer() : nullptr;
                           double* gb = pb ? pb->grad_buffer() : nullptr;
                           for (std::size_t b = 0; b < batch; ++b) {
                               for (std::size_t o = 0; o < cout; ++o) {
                                   const double* go = self.grad.data() + (b * cout + o) * n * steps;
                                   if (gb != nullptr) {
                                       double acc = 0.0;
                                       for (std::size_t i = 0; i < n * steps; ++i) {
                                           acc += go[i];
                                       }
                                       gb[o] += acc;
                                   }
                                   for (std::size_t c = 0; c < cin; ++c) {
                                       const std::size_t xoff = (b * cin + c) * n * steps;
                                       for (std::size_t kk = 0; kk < kernel; ++kk) {
                                           const std::size_t widx = (o * cin + c) * kernel + kk;
                                           const double wk = w[widx];
                                           const std::size_t shift = pad - kk * dilation;
                                           double acc = 0.0;
                                           for (std::size_t i = 0; i < n; ++i) {
                                               for (std::size_t t = shift; t < steps; ++t) {
                                                   const double g = go[i * steps + t];
                                                   acc += g * xv[xoff + i * steps + t - shift];
                                                   if (gx != nullptr) {
                                                       gx[xoff + i * steps + t - shift] += g * wk;
                                                   }
                                               }
                                           }
                                           if (gw != nullptr) {
                                               gw[widx] += acc;
                                           }
                                       }
                                   }
                               }
                           }
                       });
}

Var channel_mix(const Var& x, const Var& weight, const Var& bias) {
    require_rank(x, 4, "channel_mix");
    require_rank(weight, 2, "channel_mix");
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t plane = x.dim(2) * x.dim(3);
    const std::size_t cout = weight.dim(0);
    if (weight.dim(1) != cin) {
        throw ArgumentError("channel_mix: weight " + shape_string(weight.shape()) + " vs input " +
                            shape_string(x.shape()));
    }
    if (bias.defined() && bias.value().size() != cout) {
        throw ArgumentError("channel_mix: bias size mismatch");
    }
    Tensor out({batch, cout, x.dim(2), x.dim(3)});
    const double* xv = x.value().ptr();
    const double* w = weight.value().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < cout; ++o) {
            double* ob = out.ptr() + (b * cout + o) * plane;
            if (bias.defined()) {
                std::fill_n(ob, plane, bias.value()[o]);
            }
            for (std::size_t c = 0; c < cin; ++c) {
                const double wv = w[o * cin + c];
                const double* xb = xv + (b * cin + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    ob[i] += wv * xb[i];
                }
            }
        }
    }
    return make_result(std::move(out), {x, weight, bias}, [batch, cin, cout, plane](Node& self) {
        const double* xv = self.parents[0]->value.ptr();
        const double* w = self.parents[1]->value.ptr();
        Node* px = parent_if_needed(self, 0);
        Node* pw = parent_if_needed(self, 1);
        Node* pb = parent_if_needed(self, 2);
        double* gx = px ? px->grad_buffer() : nullptr;
        double* gw = pw ? pw->grad_buffer() : nullptr;
        double* gb = pb ? pb->grad_buffer() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < cout; ++o) {
                const double* go = self.grad.data() + (b * cout + o) * plane;
                if (gb != nullptr) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc += go[i];
                    }
                    gb[o] += acc;
                }
                for (std::size_t c = 0; c < cin; ++c) {
                    const std::size_t xoff = (b * cin + c) * plane;
                    const double wv = w[o * cin + c];
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc += go[i] * xv[xoff + i];
                        if (gx != nullptr) {
                            gx[xoff + i] += go[i] * wv;
                        }
                    }
                    if (gw != nullptr) {
                        gw[o * cin + c] += acc;
                    }
                }
            }
        }
    });
}

Var full_time_conv(const Var& x, const Var& weight, const Var& bias) {
    require_rank(x, 4, "full_time_conv");
    require_rank(weight, 3, "full_time_conv");
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t n = x.dim(2);
    const std::size_t steps = x.dim(3);
    const std::size_t cout = weight.dim(0);
    if (weight.dim(1) != cin || weight.dim(2) != steps) {
        throw ArgumentError("full_time_conv: weight " + shape_string(weight.shape()) + " vs input " +
                            shape_string(x.shape()));
    }
    if (bias.value().size() != cout) {
        throw ArgumentError("full_time_conv: bias size mismatch");
    }
    Tensor out({batch, cout, n});
    const double* xv = x.value().ptr();
    const double* w = weight.value().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = bias.value()[o];
                for (std::size_t c = 0; c < cin; ++c) {
                    const double* xr = xv + ((b * cin + c) * n + i) * steps;
                    const double* wr = w + (o * cin + c) * steps;
                    for (std::size_t t = 0; t < steps; ++t) {
                        acc += wr[t] * xr[t];
                    }
                }
                out[(b * cout + o) * n + i] = acc;
            }
        }
    }
    return make_result(std::move(out), {x, weight, bias}, [batch, cin, cout, n, steps](Node& self) {
        const double* xv = self.parents[0]->value.ptr();
        const double* w = self.parents[1]->value.ptr();
        Node* px = parent_if_needed(self, 0);
        Node* pw = parent_if_needed(self, 1);
        Node* pb = parent_if_needed(self, 2);
        double* gx = px ? px->grad_buffer() : nullptr;
        double* gw = pw ? pw->grad_buffer() : nullptr;
        double* gb = pb ? pb->grad_buffer() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < cout; ++o) {
                for (std::size_t i = 0; i < n; ++i) {
                    const double go = self.grad[(b * cout + o) * n + i];
                    if (gb != nullptr) {
                        gb[o] += go;
                    }
                    for (std::size_t c = 0; c < cin; ++c) {
                        const std::size_t xoff = ((b * cin + c) * n + i) * steps;
                        const std::size_t woff = (o * cin + c) * steps;
                        for (std::size_t t = 0; t < steps; ++t) {
                            if (gw != nullptr) {
                                gw[woff + t] += go * xv[xoff + t];
                            }
                            if (gx != nullptr) {
                                gx[xoff + t] += go * w[woff + t];
                            }
                        }
                    }
                }
            }
        }
    });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training,
               bool update_running) {
    require_rank(x, 4, "batch_norm");
    const std::size_t batch = x.dim(0);
    const std::size_t channels = x.dim(1);
    const std::size_t plane = x.dim(2) * x.dim(3);
    if (gamma.value().size() != channels || beta.value().size() != channels ||
        state.running_mean.size() != channels || state.running_var.size() != channels) {
        throw ArgumentError("batch_norm: channel count mismatch");
    }
    const double count = static_cast<double>(batch * plane);
    std::vector<double> mu(channels);
    std::vector<double> inv_std(channels);
    const double* xv = x.value().ptr();
    for (std::size_t c = 0; c < channels; ++c) {
        if (training) {
            double total = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t i = 0; i < plane; ++i) {
                    total += xv[(b * channels + c) * plane + i];
                }
            }
            mu[c] = total / count;
            double sq = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = xv[(b * channels + c) * plane + i] - mu[c];
                    sq += d * d;
                }
            }
            const double var = sq / count;
            inv_std[c] = 1.0 / std::sqrt(var + state.eps);
            if (update_running) {
                const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
                state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu[c];
                state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
            }
        } else {
            mu[c] = state.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
        }
    }
    Tensor out(x.shape());
    std::vector<double> normalized(x.value().size());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double xh = (xv[off + i] - mu[c]) * inv_std[c];
                normalized[off + i] = xh;
                out[off + i] = xh * gamma.value()[c] + beta.value()[c];
            }
        }
    }
    return make_result(
        std::move(out), {x, gamma, beta},
        [batch, channels, plane, count, training, inv_std = std::move(inv_std),
         normalized = std::move(normalized)](Node& self) {
            const double* gam = self.parents[1]->value.ptr();
            Node* px = parent_if_needed(self, 0);
            Node* pg = parent_if_needed(self, 1);
            Node* pb = parent_if_needed(self, 2);
            double* gx = px ? px->grad_buffer() : nullptr;
            double* gg = pg ? pg->grad_buffer() : nullptr;
            double* gb = pb ? pb->grad_buffer() : nullptr;
            for (std::size_t c = 0; c < channels; ++c) {
                double sum_g = 0.0;
                double sum_gx = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t off = (b * channels + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_g += self.grad[off + i];
                        sum_gx += self.grad[off + i] * normalized[off + i];
                    }
                }
                if (gg != nullptr) {
                    gg[c] += sum_gx;
                }
                if (gb != nullptr) {
                    gb[c] += sum_g;
                }
                if (gx == nullptr) {
                    continue;
                }
                const double scale = gam[c] * inv_std[c];
                const double mean_g = sum_g / count;
                const double mean_gx = sum_gx / count;
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t off = (b * channels + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        if (training) {
                            gx[off + i] += scale * (self.grad[off + i] - mean_g - normalized[off + i] * mean_gx);
                        } else {
                            gx[off + i] += scale * self.grad[off + i];
                        }
                    }
                }
            }
        });
}

} // namespace dygraph::ad
