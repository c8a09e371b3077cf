#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "styleforge/tensor.hpp"

namespace styleforge::ad {

// Reverse-mode autodiff on a dynamically built tape. Every op returns a new
// node holding its value and a closure that scatters the incoming gradient
// to its inputs. Double precision throughout so finite-difference checks can
// be held to 1e-5 relative error.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready    = false;
    std::vector<Var> inputs;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (!grad_ready) {
            grad       = Tensor::zeros(value.shape());
            grad_ready = true;
        }
        return grad;
    }
};

inline Var constant(Tensor t) {
    auto n   = std::make_shared<Node>();
    n->value = std::move(t);
    return n;
}

inline Var param(Tensor t) {
    auto n           = std::make_shared<Node>();
    n->value         = std::move(t);
    n->requires_grad = true;
    return n;
}

inline Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    auto n   = std::make_shared<Node>();
    n->value = std::move(value);
    for (const Var& in : inputs) {
        if (in->requires_grad) {
            n->requires_grad = true;
        }
    }
    if (n->requires_grad) {
        n->inputs      = std::move(inputs);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] += b->value[i];
    }
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += n.grad[i];
            }
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < gb.size(); ++i) {
                gb[i] += n.grad[i];
            }
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] -= b->value[i];
    }
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += n.grad[i];
            }
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < gb.size(); ++i) {
                gb[i] -= n.grad[i];
            }
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] *= b->value[i];
    }
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += n.grad[i] * b->value[i];
            }
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < gb.size(); ++i) {
                gb[i] += n.grad[i] * a->value[i];
            }
        }
    });
}

inline Var scale(const Var& a, double c) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] *= c;
    }
    return make_op(std::move(out), {a}, [a, c](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += n.grad[i] * c;
            }
        }
    });
}

inline Var add_scalar(const Var& a, double c) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] += c;
    }
    return make_op(std::move(out), {a}, [a](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += n.grad[i];
            }
        }
    });
}

// A [m x k] * B [k x n] -> [m x n]
inline Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.cols() != b->value.rows()) {
        throw std::invalid_argument("matmul: incompatible shapes " + a->value.shape_str() + " vs " + b->value.shape_str());
    }
    const int64_t m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            double av = a->value.at(i, p);
            for (int64_t j = 0; j < n; ++j) {
                out.at(i, j) += av * b->value.at(p, j);
            }
        }
    }
    return make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();  // dA = dY * B^T
            for (int64_t i = 0; i < m; ++i) {
                for (int64_t j = 0; j < n; ++j) {
                    double g = node.grad.at(i, j);
                    for (int64_t p = 0; p < k; ++p) {
                        ga.at(i, p) += g * b->value.at(p, j);
                    }
                }
            }
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();  // dB = A^T * dY
            for (int64_t i = 0; i < m; ++i) {
                for (int64_t p = 0; p < k; ++p) {
                    double av = a->value.at(i, p);
                    for (int64_t j = 0; j < n; ++j) {
                        gb.at(p, j) += av * node.grad.at(i, j);
                    }
                }
            }
        }
    });
}

// A [m x k] * B^T where B is [n x k] -> [m x n]; the layout used by linear layers.
inline Var matmul_nt(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.cols() != b->value.cols()) {
        throw std::invalid_argument("matmul_nt: incompatible shapes " + a->value.shape_str() + " vs " + b->value.shape_str());
    }
    const int64_t m = a->value.rows(), k = a->value.cols(), n = b->value.rows();
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                s += a->value.at(i, p) * b->value.at(j, p);
            }
            out.at(i, j) = s;
        }
    }
    return make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();  // dA = dY * B
            for (int64_t i = 0; i < m; ++i) {
                for (int64_t j = 0; j < n; ++j) {
                    double g = node.grad.at(i, j);
                    for (int64_t p = 0; p < k; ++p) {
                        ga.at(i, p) += g * b->value.at(j, p);
                    }
                }
            }
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();  // dB = dY^T * A
            for (int64_t i = 0; i < m; ++i) {
                for (int64_t j = 0; j < n; ++j) {
                    double g = node.grad.at(i, j);
                    for (int64_t p = 0; p < k; ++p) {
                        gb.at(j, p) += g * a->value.at(i, p);
                    }
                }
            }
        }
    });
}

// X [n x d] + row vector b [d], broadcast over rows
inline Var add_rowvec(const Var& x, const Var& b) {
    if (x->value.rank() != 2 || b->value.rank() != 1 || x->value.cols() != b->value.dim(0)) {
        throw std::invalid_argument("add_rowvec: incompatible shapes");
    }
    const int64_t n = x->value.rows(), d = x->value.cols();
    Tensor out = x->value;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            out.at(i, j) += b->value[j];
        }
    }
    return make_op(std::move(out), {x, b}, [x, b, n, d](Node& node) {
        if (x->requires_grad) {
            Tensor& gx = x->ensure_grad();
            for (int64_t i = 0; i < gx.size(); ++i) {
                gx[i] += node.grad[i];
            }
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t j = 0; j < d; ++j) {
                    gb[j] += node.grad.at(i, j);
                }
            }
        }
    });
}

inline Var transpose(const Var& a) {
    if (a->value.rank() != 2) {
        throw std::invalid_argument("transpose: rank-2 tensor required");
    }
    const int64_t m = a->value.rows(), n = a->value.cols();
    Tensor out({n, m});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            out.at(j, i) = a->value.at(i, j);
        }
    }
    return make_op(std::move(out), {a}, [a, m, n](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < m; ++i) {
                for (int64_t j = 0; j < n; ++j) {
                    ga.at(i, j) += node.grad.at(j, i);
                }
            }
        }
    });
}

inline Var reshape(const Var& a, std::vector<int64_t> shape) {
    Tensor out = a->value.reshaped(shape);
    return make_op(std::move(out), {a}, [a](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += node.grad[i];
            }
        }
    });
}

inline Var concat_rows(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.cols() != b->value.cols()) {
        throw std::invalid_argument("concat_rows: column mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    }
    const int64_t ra = a->value.rows(), rb = b->value.rows(), d = a->value.cols();
    Tensor out({ra + rb, d});
    std::copy(a->value.data(), a->value.data() + ra * d, out.data());
    std::copy(b->value.data(), b->value.data() + rb * d, out.data() + ra * d);
    return make_op(std::move(out), {a, b}, [a, b, ra, rb, d](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ra * d; ++i) {
                ga[i] += node.grad[i];
            }
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < rb * d; ++i) {
                gb[i] += node.grad[ra * d + i];
            }
        }
    });
}

inline Var slice_rows(const Var& a, int64_t row0, int64_t row1) {
    if (a->value.rank() != 2 || row0 < 0 || row1 > a->value.rows() || row0 >= row1) {
        throw std::invalid_argument("slice_rows: bad range");
    }
    const int64_t d = a->value.cols();
    Tensor out({row1 - row0, d});
    std::copy(a->value.data() + row0 * d, a->value.data() + row1 * d, out.data());
    return make_op(std::move(out), {a}, [a, row0, row1, d](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < (row1 - row0) * d; ++i) {
                ga[row0 * d + i] += node.grad[i];
            }
        }
    });
}

// row r of a [1 x d] input repeated k times -> [k x d]
inline Var repeat_row(const Var& a, int64_t k) {
    if (a->value.rank() != 2 || a->value.rows() != 1) {
        throw std::invalid_argument("repeat_row: [1 x d] input required");
    }
    const int64_t d = a->value.cols();
    Tensor out({k, d});
    for (int64_t i = 0; i < k; ++i) {
        std::copy(a->value.data(), a->value.data() + d, out.data() + i * d);
    }
    return make_op(std::move(out), {a}, [a, k, d](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < k; ++i) {
                for (int64_t j = 0; j < d; ++j) {
                    ga[j] += node.grad.at(i, j);
                }
            }
        }
    });
}

inline Var gather_rows(const Var& table, const std::vector<int>& ids) {
    if (table->value.rank() != 2) {
        throw std::invalid_argument("gather_rows: rank-2 table required");
    }
    const int64_t d = table->value.cols();
    Tensor out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table->value.rows()) {
            throw std::out_of_range("gather_rows: id out of range");
        }
        std::copy(table->value.data() + ids[i] * d, table->value.data() + (ids[i] + 1) * d,
                  out.data() + static_cast<int64_t>(i) * d);
    }
    return make_op(std::move(out), {table}, [table, ids, d](Node& node) {
        if (table->requires_grad) {
            Tensor& gt = table->ensure_grad();
            for (size_t i = 0; i < ids.size(); ++i) {
                for (int64_t j = 0; j < d; ++j) {
                    gt.at(ids[i], j) += node.grad.at(static_cast<int64_t>(i), j);
                }
            }
        }
    });
}

inline Var tanh_v(const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] = std::tanh(out[i]);
    }
    return make_op(out, {a}, [a, out](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += node.grad[i] * (1.0 - out[i] * out[i]);
            }
        }
    });
}

inline Var softmax_rows(const Var& a) {
    if (a->value.rank() != 2) {
        throw std::invalid_argument("softmax_rows: rank-2 tensor required");
    }
    const int64_t n = a->value.rows(), d = a->value.cols();
    Tensor out({n, d});
    for (int64_t i = 0; i < n; ++i) {
        double mx = a->value.at(i, 0);
        for (int64_t j = 1; j < d; ++j) {
            mx = std::max(mx, a->value.at(i, j));
        }
        double z = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double e = std::exp(a->value.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int64_t j = 0; j < d; ++j) {
            out.at(i, j) /= z;
        }
    }
    return make_op(out, {a}, [a, out, n, d](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    dot += node.grad.at(i, j) * out.at(i, j);
                }
                for (int64_t j = 0; j < d; ++j) {
                    ga.at(i, j) += out.at(i, j) * (node.grad.at(i, j) - dot);
                }
            }
        }
    });
}

// per-row RMS normalization with learnable gain g [d]
inline Var rmsnorm_rows(const Var& x, const Var& gain, double eps = 1e-6) {
    if (x->value.rank() != 2 || gain->value.rank() != 1 || x->value.cols() != gain->value.dim(0)) {
        throw std::invalid_argument("rmsnorm_rows: incompatible shapes");
    }
    const int64_t n = x->value.rows(), d = x->value.cols();
    Tensor out({n, d});
    std::vector<double> inv_rms(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double ms = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            ms += x->value.at(i, j) * x->value.at(i, j);
        }
        ms = ms / static_cast<double>(d) + eps;
        double r = 1.0 / std::sqrt(ms);
        inv_rms[static_cast<size_t>(i)] = r;
        for (int64_t j = 0; j < d; ++j) {
            out.at(i, j) = x->value.at(i, j) * r * gain->value[j];
        }
    }
    return make_op(std::move(out), {x, gain}, [x, gain, inv_rms, n, d](Node& node) {
        for (int64_t i = 0; i < n; ++i) {
            double r = inv_rms[static_cast<size_t>(i)];
            if (x->requires_grad) {
                // y_j = x_j * r * g_j with r = (mean(x^2)+eps)^{-1/2}
                double s = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    s += node.grad.at(i, j) * gain->value[j] * x->value.at(i, j);
                }
                s *= r * r * r / static_cast<double>(d);
                Tensor& gx = x->ensure_grad();
                for (int64_t j = 0; j < d; ++j) {
                    gx.at(i, j) += node.grad.at(i, j) * gain->value[j] * r - s * x->value.at(i, j);
                }
            }
            if (gain->requires_grad) {
                Tensor& gg = gain->ensure_grad();
                for (int64_t j = 0; j < d; ++j) {
                    gg[j] += node.grad.at(i, j) * x->value.at(i, j) * r;
                }
            }
        }
    });
}

inline Var sum_all(const Var& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a->value.size(); ++i) {
        s += a->value[i];
    }
    return make_op(Tensor::scalar(s), {a}, [a](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += node.grad[0];
            }
        }
    });
}

inline Var mean_all(const Var& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a->value.size()));
}

inline Var sqrt_v(const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] = std::sqrt(out[i]);
    }
    return make_op(out, {a}, [a, out](Node& node) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += node.grad[i] * 0.5 / out[i];
            }
        }
    });
}

inline Var div(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "div");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] /= b->value[i];
    }
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.size(); ++i) {
                ga[i] += n.grad[i] / b->value[i];
            }
        }
        if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t i = 0; i < gb.size(); ++i) {
                gb[i] -= n.grad[i] * a->value[i] / (b->value[i] * b->value[i]);
            }
        }
    });
}

// mean of squared differences; the loss shape used by every stage
inline Var mse(const Var& a, const Var& b) {
    Var d = sub(a, b);
    return mean_all(mul(d, d));
}

inline Var dot_all(const Var& a, const Var& b) {
    return sum_all(mul(a, b));
}

// topological order, then accumulate gradients from a scalar root
inline void backward(const Var& root) {
    if (root->value.size() != 1) {
        throw std::invalid_argument("backward: root must be scalar");
    }
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* next = node->inputs[idx].get();
            ++idx;
            if (next->requires_grad && !seen.count(next)) {
                seen.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad_ready) {
            node->backward_fn(*node);
        }
    }
}

inline void zero_grad(const std::vector<Var>& params) {
    for (const Var& p : params) {
        p->grad_ready = false;
        p->grad       = Tensor();
    }
}

}  // namespace styleforge::ad
