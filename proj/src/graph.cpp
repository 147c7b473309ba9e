#include "ltdd/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <string>

#include "ltdd/errors.hpp"

namespace ltdd {
namespace {

std::atomic<std::uint32_t> next_graph_id{1};

[[noreturn]] void shape_fail(const char* primitive, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(primitive) + ": incompatible shapes " + shape_to_string(a) + " and " +
                     shape_to_string(b));
}

[[noreturn]] void shape_fail(const char* primitive, const Shape& a, const char* expected) {
    throw ShapeError(std::string(primitive) + ": shape " + shape_to_string(a) + " but expected " + expected);
}

// C = A * B
Tensor mat_mul(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out(i, j) += aip * b(p, j);
        }
    }
    return out;
}

// C = A^T * B
Tensor mat_tmul(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor out = Tensor::zeros({k, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out(p, j) += aip * b(i, j);
        }
    }
    return out;
}

// C = A * B^T
Tensor mat_mult(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(j, p);
            out(i, j) = acc;
        }
    }
    return out;
}

Tensor transposed(const Tensor& a) {
    const std::size_t n = a.rows(), m = a.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out(j, i) = a(i, j);
    return out;
}

Tensor row_log_softmax(const Tensor& a) {
    Tensor out = a;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = out.row(r);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double v : row) total += std::exp(v - peak);
        const double lse = peak + std::log(total);
        for (double& v : row) v -= lse;
    }
    return out;
}

Tensor row_softmax(const Tensor& a) {
    Tensor out = row_log_softmax(a);
    for (double& v : out.data()) v = std::exp(v);
    return out;
}

template <typename F>
Tensor map_values(const Tensor& a, F f) {
    Tensor out = a;
    for (double& v : out.data()) v = f(v);
    return out;
}

template <typename F>
Tensor zip_values(const Tensor& a, const Tensor& b, F f) {
    Tensor out = a;
    auto od = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(od[i], bd[i]);
    return out;
}

}  // namespace

Graph::Graph() : id_(next_graph_id.fetch_add(1)) {}

std::uint32_t Graph::check(NodeId id, const char* primitive) const {
    if (id.graph != id_ || id.index >= nodes_.size()) {
        throw std::invalid_argument(std::string(primitive) + ": node does not belong to this graph");
    }
    return id.index;
}

NodeId Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return NodeId{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::constant(Tensor value) { return push(Node{Op::constant, 0, 0, std::move(value)}); }

NodeId Graph::leaf(Tensor value) {
    Node node{Op::leaf, 0, 0, std::move(value)};
    node.needs_grad = true;
    NodeId id = push(std::move(node));
    leaves_.push_back(id);
    return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
    const auto ia = check(a, "add"), ib = check(b, "add");
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.shape() != vb.shape()) shape_fail("add", va.shape(), vb.shape());
    Node node{Op::add, ia, ib, zip_values(va, vb, [](double x, double y) { return x + y; })};
    node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    return push(std::move(node));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    const auto ia = check(a, "sub"), ib = check(b, "sub");
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.shape() != vb.shape()) shape_fail("sub", va.shape(), vb.shape());
    Node node{Op::sub, ia, ib, zip_values(va, vb, [](double x, double y) { return x - y; })};
    node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    return push(std::move(node));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const auto ia = check(a, "mul"), ib = check(b, "mul");
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.shape() != vb.shape()) shape_fail("mul", va.shape(), vb.shape());
    Node node{Op::mul, ia, ib, zip_values(va, vb, [](double x, double y) { return x * y; })};
    node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    return push(std::move(node));
}

NodeId Graph::scale(NodeId a, double factor) {
    const auto ia = check(a, "scale");
    Node node{Op::scale, ia, 0, map_values(nodes_[ia].value, [factor](double x) { return factor * x; })};
    node.factor = factor;
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::scale_by(NodeId factor, NodeId a) {
    const auto is = check(factor, "scale_by"), ia = check(a, "scale_by");
    const Tensor& vs = nodes_[is].value;
    if (vs.size() != 1) shape_fail("scale_by", vs.shape(), "a single-valued factor");
    const double s = vs[0];
    Node node{Op::scale_by, is, ia, map_values(nodes_[ia].value, [s](double x) { return s * x; })};
    node.needs_grad = nodes_[is].needs_grad || nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const auto ia = check(a, "matmul"), ib = check(b, "matmul");
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows()) shape_fail("matmul", va.shape(), vb.shape());
    Node node{Op::matmul, ia, ib, mat_mul(va, vb)};
    node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    return push(std::move(node));
}

NodeId Graph::transpose(NodeId a) {
    const auto ia = check(a, "transpose");
    const Tensor& va = nodes_[ia].value;
    if (va.rank() != 2) shape_fail("transpose", va.shape(), "a matrix");
    Node node{Op::transpose, ia, 0, transposed(va)};
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::relu(NodeId a) {
    const auto ia = check(a, "relu");
    Node node{Op::relu, ia, 0, map_values(nodes_[ia].value, [](double x) { return x > 0.0 ? x : 0.0; })};
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::relu_mask(NodeId a) {
    const auto ia = check(a, "relu_mask");
    return push(Node{Op::relu_mask, ia, 0, map_values(nodes_[ia].value, [](double x) { return x > 0.0 ? 1.0 : 0.0; })});
}

NodeId Graph::log_softmax(NodeId a) {
    const auto ia = check(a, "log_softmax");
    const Tensor& va = nodes_[ia].value;
    if (va.rank() != 2) shape_fail("log_softmax", va.shape(), "a matrix");
    Node node{Op::log_softmax, ia, 0, row_log_softmax(va)};
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::softmax(NodeId a) {
    const auto ia = check(a, "softmax");
    const Tensor& va = nodes_[ia].value;
    if (va.rank() != 2) shape_fail("softmax", va.shape(), "a matrix");
    Node node{Op::softmax, ia, 0, row_softmax(va)};
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::sum(NodeId a) {
    const auto ia = check(a, "sum");
    double total = 0.0;
    for (double v : nodes_[ia].value.data()) total += v;
    Node node{Op::sum, ia, 0, Tensor::scalar(total)};
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::mean(NodeId a) {
    const auto ia = check(a, "mean");
    const Tensor& va = nodes_[ia].value;
    if (va.size() == 0) shape_fail("mean", va.shape(), "a nonempty tensor");
    double total = 0.0;
    for (double v : va.data()) total += v;
    Node node{Op::mean, ia, 0, Tensor::scalar(total / static_cast<double>(va.size()))};
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::gather_rows(NodeId a, std::vector<std::size_t> indices) {
    const auto ia = check(a, "gather_rows");
    const Tensor& va = nodes_[ia].value;
    if (va.rank() != 2) shape_fail("gather_rows", va.shape(), "a matrix");
    const std::size_t m = va.cols();
    std::vector<double> data;
    data.reserve(indices.size() * m);
    for (std::size_t r : indices) {
        if (r >= va.rows()) {
            throw ShapeError("gather_rows: row index " + std::to_string(r) + " out of range for shape " +
                             shape_to_string(va.shape()));
        }
        auto row = va.row(r);
        data.insert(data.end(), row.begin(), row.end());
    }
    Node node{Op::gather_rows, ia, 0, Tensor::matrix(indices.size(), m, std::move(data))};
    node.indices = std::move(indices);
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

NodeId Graph::add_rowvec(NodeId a, NodeId v) {
    const auto ia = check(a, "add_rowvec"), iv = check(v, "add_rowvec");
    const Tensor& va = nodes_[ia].value;
    const Tensor& vv = nodes_[iv].value;
    if (va.rank() != 2 || vv.rank() != 1 || vv.size() != va.cols()) shape_fail("add_rowvec", va.shape(), vv.shape());
    Tensor out = va;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += vv[c];
    }
    Node node{Op::add_rowvec, ia, iv, std::move(out)};
    node.needs_grad = nodes_[ia].needs_grad || nodes_[iv].needs_grad;
    return push(std::move(node));
}

NodeId Graph::sum_rows(NodeId a) {
    const auto ia = check(a, "sum_rows");
    const Tensor& va = nodes_[ia].value;
    if (va.rank() != 2) shape_fail("sum_rows", va.shape(), "a matrix");
    Tensor out = Tensor::zeros({va.cols()});
    for (std::size_t r = 0; r < va.rows(); ++r) {
        auto row = va.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
    }
    Node node{Op::sum_rows, ia, 0, std::move(out)};
    node.needs_grad = nodes_[ia].needs_grad;
    return push(std::move(node));
}

const Tensor& Graph::value(NodeId id) const { return nodes_[check(id, "value")].value; }

bool Graph::requires_grad(NodeId id) const { return nodes_[check(id, "requires_grad")].needs_grad; }

void Graph::accumulate(std::vector<Tensor>& grads, std::uint32_t target, const Tensor& contribution) const {
    if (!nodes_[target].needs_grad) return;
    Tensor& slot = grads[target];
    if (slot.size() == 0 && nodes_[target].value.size() != 0) {
        slot = contribution;
        return;
    }
    auto sd = slot.data();
    auto cd = contribution.data();
    for (std::size_t i = 0; i < sd.size(); ++i) sd[i] += cd[i];
}

std::map<NodeId, Tensor> Graph::backward(NodeId root) const {
    const auto ir = check(root, "backward");
    if (nodes_[ir].value.size() != 1) {
        throw ShapeError("backward: root must be scalar, got shape " + shape_to_string(nodes_[ir].value.shape()));
    }

    std::vector<Tensor> grads(nodes_.size());
    if (nodes_[ir].needs_grad) grads[ir] = Tensor::filled(nodes_[ir].value.shape(), 1.0);

    for (std::uint32_t i = ir + 1; i-- > 0;) {
        const Node& node = nodes_[i];
        if (!node.needs_grad || grads[i].size() == 0) continue;
        const Tensor& g = grads[i];

        switch (node.op) {
            case Op::constant:
            case Op::leaf:
            case Op::relu_mask:
                break;
            case Op::add:
                accumulate(grads, node.a, g);
                accumulate(grads, node.b, g);
                break;
            case Op::sub:
                accumulate(grads, node.a, g);
                if (nodes_[node.b].needs_grad) accumulate(grads, node.b, map_values(g, [](double x) { return -x; }));
                break;
            case Op::mul:
                if (nodes_[node.a].needs_grad)
                    accumulate(grads, node.a, zip_values(g, nodes_[node.b].value, std::multiplies<>()));
                if (nodes_[node.b].needs_grad)
                    accumulate(grads, node.b, zip_values(g, nodes_[node.a].value, std::multiplies<>()));
                break;
            case Op::scale: {
                const double f = node.factor;
                accumulate(grads, node.a, map_values(g, [f](double x) { return f * x; }));
                break;
            }
            case Op::scale_by: {
                const Tensor& x = nodes_[node.b].value;
                if (nodes_[node.a].needs_grad) {
                    double dot = 0.0;
                    for (std::size_t k = 0; k < x.size(); ++k) dot += g[k] * x[k];
                    accumulate(grads, node.a, Tensor::filled(nodes_[node.a].value.shape(), dot));
                }
                if (nodes_[node.b].needs_grad) {
                    const double s = nodes_[node.a].value[0];
                    accumulate(grads, node.b, map_values(g, [s](double v) { return s * v; }));
                }
                break;
            }
            case Op::matmul:
                if (nodes_[node.a].needs_grad) accumulate(grads, node.a, mat_mult(g, nodes_[node.b].value));
                if (nodes_[node.b].needs_grad) accumulate(grads, node.b, mat_tmul(nodes_[node.a].value, g));
                break;
            case Op::transpose:
                accumulate(grads, node.a, transposed(g));
                break;
            case Op::relu:
                accumulate(grads, node.a,
                           zip_values(g, nodes_[node.a].value, [](double gv, double x) { return x > 0.0 ? gv : 0.0; }));
                break;
            case Op::log_softmax: {
                // d/da = g - softmax(a) * rowsum(g)
                Tensor out = g;
                for (std::size_t r = 0; r < out.rows(); ++r) {
                    auto gr = g.row(r);
                    auto yr = node.value.row(r);
                    double total = 0.0;
                    for (double v : gr) total += v;
                    auto orow = out.row(r);
                    for (std::size_t c = 0; c < orow.size(); ++c) orow[c] = gr[c] - std::exp(yr[c]) * total;
                }
                accumulate(grads, node.a, out);
                break;
            }
            case Op::softmax: {
                // d/da = y * (g - <g, y>)
                Tensor out = g;
                for (std::size_t r = 0; r < out.rows(); ++r) {
                    auto gr = g.row(r);
                    auto yr = node.value.row(r);
                    double dot = 0.0;
                    for (std::size_t c = 0; c < gr.size(); ++c) dot += gr[c] * yr[c];
                    auto orow = out.row(r);
                    for (std::size_t c = 0; c < orow.size(); ++c) orow[c] = yr[c] * (gr[c] - dot);
                }
                accumulate(grads, node.a, out);
                break;
            }
            case Op::sum:
                accumulate(grads, node.a, Tensor::filled(nodes_[node.a].value.shape(), g[0]));
                break;
            case Op::mean: {
                const Tensor& x = nodes_[node.a].value;
                accumulate(grads, node.a, Tensor::filled(x.shape(), g[0] / static_cast<double>(x.size())));
                break;
            }
            case Op::gather_rows: {
                Tensor out = Tensor::zeros(nodes_[node.a].value.shape());
                for (std::size_t k = 0; k < node.indices.size(); ++k) {
                    auto src = g.row(k);
                    auto dst = out.row(node.indices[k]);
                    for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                }
                accumulate(grads, node.a, out);
                break;
            }
            case Op::add_rowvec: {
                accumulate(grads, node.a, g);
                if (nodes_[node.b].needs_grad) {
                    Tensor col = Tensor::zeros(nodes_[node.b].value.shape());
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        auto gr = g.row(r);
                        for (std::size_t c = 0; c < gr.size(); ++c) col[c] += gr[c];
                    }
                    accumulate(grads, node.b, col);
                }
                break;
            }
            case Op::sum_rows: {
                const Tensor& x = nodes_[node.a].value;
                Tensor out = Tensor::zeros(x.shape());
                for (std::size_t r = 0; r < x.rows(); ++r) {
                    auto orow = out.row(r);
                    for (std::size_t c = 0; c < orow.size(); ++c) orow[c] = g[c];
                }
                accumulate(grads, node.a, out);
                break;
            }
        }
    }

    std::map<NodeId, Tensor> result;
    for (NodeId leaf_id : leaves_) {
        const Tensor& g = grads[leaf_id.index];
        result.emplace(leaf_id, g.size() ? g : Tensor::zeros(nodes_[leaf_id.index].value.shape()));
    }
    return result;
}

std::vector<NodeId> inner_sgd_step(Graph& graph, std::span<const NodeId> params, std::span<const NodeId> grads,
                                   NodeId step) {
    if (params.size() != grads.size()) {
        throw ShapeError("inner_sgd_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    std::vector<NodeId> updated;
    updated.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = graph.value(params[i]);
        const Tensor& g = graph.value(grads[i]);
        if (p.shape() != g.shape()) shape_fail("inner_sgd_step", p.shape(), g.shape());
        updated.push_back(graph.sub(params[i], graph.scale_by(step, grads[i])));
    }
    return updated;
}

}  // namespace ltdd
