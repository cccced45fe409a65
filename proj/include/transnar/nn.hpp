#pragma once

#include <cstring>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "transnar/autodiff.hpp"
#include "transnar/rng.hpp"
#include "transnar/tensor.hpp"

namespace transnar {

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    // per-tape leaf cache so shared weights map to one tape node
    const void* cache_tape = nullptr;
    uint64_t cache_epoch = 0;
    long cache_idx = -1;

    void zero_grad() { grad.fill(T(0)); }
};

enum class Init { zeros, ones, normal, xavier };

template <typename T>
class ParamStore {
public:
    Param<T>& add(const std::string& name, Shape shape, Init init, Rng& rng, double std_or_scale = 0.02) {
        if (index_.count(name)) throw std::logic_error("ParamStore: duplicate param " + name);
        auto p = std::make_unique<Param<T>>();
        p->name = name;
        p->value = Tensor<T>(shape);
        p->grad = Tensor<T>::zeros(shape);
        switch (init) {
            case Init::zeros:
                break;
            case Init::ones:
                p->value.fill(T(1));
                break;
            case Init::normal:
                for (long i = 0; i < p->value.numel(); ++i)
                    p->value.at(i) = static_cast<T>(rng.normal(0.0, std_or_scale));
                break;
            case Init::xavier: {
                const long fi = shape.size() >= 2 ? shape[0] : p->value.numel();
                const long fo = shape.size() >= 2 ? shape[shape.size() - 1] : 1;
                const double s = std::sqrt(2.0 / static_cast<double>(fi + fo));
                for (long i = 0; i < p->value.numel(); ++i)
                    p->value.at(i) = static_cast<T>(rng.normal(0.0, s));
                break;
            }
        }
        index_[name] = params_.size();
        params_.push_back(std::move(p));
        return *params_.back();
    }

    Param<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }
    const Param<T>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }

    std::vector<Param<T>*> all() {
        std::vector<Param<T>*> out;
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    std::vector<Param<T>*> trainable() {
        std::vector<Param<T>*> out;
        for (auto& p : params_)
            if (p->trainable) out.push_back(p.get());
        return out;
    }

    std::vector<Param<T>*> with_prefix(const std::string& prefix) {
        std::vector<Param<T>*> out;
        for (auto& p : params_)
            if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
        return out;
    }

    void zero_grads() {
        for (auto& p : params_) p->zero_grad();
    }

    void set_trainable(const std::string& prefix, bool flag) {
        for (auto& p : params_)
            if (p->name.rfind(prefix, 0) == 0) p->trainable = flag;
    }

    long total_count() const {
        long n = 0;
        for (auto& p : params_) n += p->value.numel();
        return n;
    }

    /// Checksum over names and value bytes, order-independent of insertion
    /// only insofar as the store order is itself deterministic.
    uint64_t checksum(const std::string& prefix = "") const {
        uint64_t h = 1469598103934665603ULL;
        for (auto& p : params_) {
            if (!prefix.empty() && p->name.rfind(prefix, 0) != 0) continue;
            h = fnv1a64(p->name.data(), p->name.size(), h);
            h = fnv1a64(p->value.ptr(), sizeof(T) * static_cast<size_t>(p->value.numel()), h);
        }
        return h;
    }

    size_t size() const { return params_.size(); }

private:
    std::vector<std::unique_ptr<Param<T>>> params_;
    std::map<std::string, size_t> index_;
};

/// Tape leaf for a parameter; one node per (tape, epoch) even if used at
/// several sites, so shared weights are literally the same node.
template <typename T>
ad::Var<T> use(ad::Tape<T>& tp, Param<T>& p) {
    if (p.cache_tape == &tp && p.cache_epoch == tp.epoch() && p.cache_idx >= 0 && p.cache_idx < tp.size())
        return {&tp, p.cache_idx};
    ad::Var<T> v = p.trainable ? tp.param_leaf(p.value, &p.grad) : tp.constant(p.value);
    p.cache_tape = &tp;
    p.cache_epoch = tp.epoch();
    p.cache_idx = v.idx;
    return v;
}

template <typename T>
struct Linear {
    Param<T>* w = nullptr;
    Param<T>* b = nullptr;

    static Linear create(ParamStore<T>& ps, const std::string& name, long in, long out, Rng& rng,
                         Init init = Init::xavier, bool bias = true, double std = 0.02) {
        Linear l;
        l.w = &ps.add(name + ".w", Shape{in, out}, init, rng, std);
        if (bias) l.b = &ps.add(name + ".b", Shape{out}, Init::zeros, rng);
        return l;
    }

    ad::Var<T> operator()(ad::Tape<T>& tp, ad::Var<T> x) const {
        if (b) return ad::linear(x, use(tp, *w), use(tp, *b));
        return ad::linear(x, use(tp, *w));
    }
};

template <typename T>
struct LayerNorm {
    Param<T>* gamma = nullptr;
    Param<T>* beta = nullptr;

    static LayerNorm create(ParamStore<T>& ps, const std::string& name, long n, Rng& rng) {
        LayerNorm l;
        l.gamma = &ps.add(name + ".g", Shape{n}, Init::ones, rng);
        l.beta = &ps.add(name + ".b", Shape{n}, Init::zeros, rng);
        return l;
    }

    ad::Var<T> operator()(ad::Tape<T>& tp, ad::Var<T> x) const {
        return ad::layer_norm(x, use(tp, *gamma), use(tp, *beta));
    }
};

enum class Act { relu, gelu };

/// Two-layer MLP in -> hidden -> out.
template <typename T>
struct Mlp {
    Linear<T> l1, l2;
    Act act = Act::relu;

    static Mlp create(ParamStore<T>& ps, const std::string& name, long in, long hidden, long out, Rng& rng,
                      Act act = Act::relu) {
        Mlp m;
        m.l1 = Linear<T>::create(ps, name + ".l1", in, hidden, rng);
        m.l2 = Linear<T>::create(ps, name + ".l2", hidden, out, rng);
        m.act = act;
        return m;
    }

    ad::Var<T> operator()(ad::Tape<T>& tp, ad::Var<T> x) const {
        ad::Var<T> h = l1(tp, x);
        h = act == Act::relu ? ad::relu(h) : ad::gelu(h);
        return l2(tp, h);
    }
};

template <typename T>
class Adam {
public:
    Adam(std::vector<Param<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            slots_.push_back({Tensor<double>::zeros(p->value.shape), Tensor<double>::zeros(p->value.shape)});
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Param<T>& p = *params_[i];
            auto& [m, v] = slots_[i];
            for (long j = 0; j < p.value.numel(); ++j) {
                const double g = static_cast<double>(p.grad.at(j));
                m.at(j) = b1_ * m.at(j) + (1.0 - b1_) * g;
                v.at(j) = b2_ * v.at(j) + (1.0 - b2_) * g * g;
                const double mh = m.at(j) / bc1;
                const double vh = v.at(j) / bc2;
                p.value.at(j) = static_cast<T>(static_cast<double>(p.value.at(j)) -
                                               lr_ * mh / (std::sqrt(vh) + eps_));
            }
        }
    }

    void zero_grads() {
        for (auto* p : params_) p->zero_grad();
    }

    double lr() const { return lr_; }
    long step_count() const { return t_; }
    void set_step_count(long t) { t_ = t; }

    const std::vector<Param<T>*>& params() const { return params_; }
    std::pair<Tensor<double>*, Tensor<double>*> slot(size_t i) {
        return {&slots_[i].first, &slots_[i].second};
    }

private:
    std::vector<Param<T>*> params_;
    std::vector<std::pair<Tensor<double>, Tensor<double>>> slots_;
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
};

}  // namespace transnar
