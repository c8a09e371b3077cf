#pragma once

#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "styleforge/autograd.hpp"
#include "styleforge/rng.hpp"
#include "styleforge/tensor.hpp"

namespace styleforge {

// Ordered collection of named parameters. Order is insertion order and is
// part of the model's identity: hashing, checkpointing and the optimizer all
// walk it in the same sequence.
class ParamStore {
public:
    ad::Var add(const std::string& name, Tensor init) {
        if (index_.count(name)) {
            throw std::invalid_argument("duplicate parameter name: " + name);
        }
        ad::Var v = ad::param(std::move(init));
        index_[name] = params_.size();
        params_.emplace_back(name, v);
        return v;
    }

    const ad::Var& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::out_of_range("no parameter named " + name);
        }
        return params_[it->second].second;
    }

    std::vector<ad::Var> vars() const {
        std::vector<ad::Var> out;
        out.reserve(params_.size());
        for (const auto& [name, v] : params_) {
            out.push_back(v);
        }
        return out;
    }

    const std::vector<std::pair<std::string, ad::Var>>& entries() const { return params_; }

    size_t size() const { return params_.size(); }

    int64_t element_count() const {
        int64_t n = 0;
        for (const auto& [name, v] : params_) {
            n += v->value.size();
        }
        return n;
    }

private:
    std::vector<std::pair<std::string, ad::Var>> params_;
    std::map<std::string, size_t> index_;
};

// FNV-1a over parameter names and raw value bytes, in store order. Exact
// equality of this hash is how the freezing contracts are enforced.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 1469598103934665603ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t param_hash(const ParamStore& store) {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, v] : store.entries()) {
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(v->value.data(), static_cast<size_t>(v->value.size()) * sizeof(double), h);
    }
    return h;
}

inline uint64_t tensor_hash(const Tensor& t) {
    return fnv1a(t.data(), static_cast<size_t>(t.size()) * sizeof(double));
}

struct Linear {
    ad::Var weight;  // [out x in]
    ad::Var bias;    // [out]

    Linear() = default;

    Linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng, double w_std) {
        weight = store.add(name + ".weight", Tensor::randn({out, in}, rng, 0.0, w_std));
        bias   = store.add(name + ".bias", Tensor::zeros({out}));
    }

    ad::Var operator()(const ad::Var& x) const {
        return ad::add_rowvec(ad::matmul_nt(x, weight), bias);
    }
};

// Single-head scaled dot-product attention. Self-attention when kv == q
// input, cross-attention otherwise; the kv side may have any row count.
struct Attention {
    Linear q, k, v, out;
    ad::Var norm_gain;
    int64_t dim = 0;

    Attention() = default;

    Attention(ParamStore& store, const std::string& name, int64_t d, Rng& rng, double w_std) : dim(d) {
        q         = Linear(store, name + ".q", d, d, rng, w_std);
        k         = Linear(store, name + ".k", d, d, rng, w_std);
        v         = Linear(store, name + ".v", d, d, rng, w_std);
        out       = Linear(store, name + ".out", d, d, rng, w_std);
        norm_gain = store.add(name + ".norm_gain", Tensor::full({d}, 1.0));
    }

    // residual block: x + out(softmax(qk^T/sqrt(d)) v)
    ad::Var operator()(const ad::Var& x, const ad::Var& kv) const {
        ad::Var xn   = ad::rmsnorm_rows(x, norm_gain);
        ad::Var qs   = q(xn);
        ad::Var ks   = k(kv);
        ad::Var vs   = v(kv);
        ad::Var att  = ad::scale(ad::matmul_nt(qs, ks), 1.0 / std::sqrt(static_cast<double>(dim)));
        ad::Var w    = ad::softmax_rows(att);
        ad::Var mixed = ad::matmul(w, vs);
        return ad::add(x, out(mixed));
    }
};

// residual two-layer feed-forward with tanh
struct Mlp {
    Linear fc1, fc2;
    ad::Var norm_gain;

    Mlp() = default;

    Mlp(ParamStore& store, const std::string& name, int64_t d, int64_t hidden, Rng& rng, double w_std) {
        fc1       = Linear(store, name + ".fc1", d, hidden, rng, w_std);
        fc2       = Linear(store, name + ".fc2", hidden, d, rng, w_std);
        norm_gain = store.add(name + ".norm_gain", Tensor::full({d}, 1.0));
    }

    ad::Var operator()(const ad::Var& x) const {
        return ad::add(x, fc2(ad::tanh_v(fc1(ad::rmsnorm_rows(x, norm_gain)))));
    }
};

// cosine of two rank-1 vectors as a graph node; caller checks norms upfront
inline ad::Var cosine_v(const ad::Var& a, const ad::Var& b, double eps = 0.0) {
    ad::Var num   = ad::dot_all(a, b);
    ad::Var na    = ad::sqrt_v(ad::add_scalar(ad::dot_all(a, a), eps));
    ad::Var nb    = ad::sqrt_v(ad::add_scalar(ad::dot_all(b, b), eps));
    return ad::div(num, ad::mul(na, nb));
}

inline double vector_norm(const Tensor& t) {
    double s = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) {
        s += t[i] * t[i];
    }
    return std::sqrt(s);
}

inline double cosine_similarity(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "cosine_similarity");
    double na = vector_norm(a), nb = vector_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw std::domain_error("cosine undefined for zero-norm vector");
    }
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s / (na * nb);
}

}  // namespace styleforge
