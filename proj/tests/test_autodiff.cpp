#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "test_util.hpp"
#include "transnar/autodiff.hpp"
#include "transnar/nn.hpp"

using namespace transnar;
namespace tad = transnar::ad;

namespace {

template <typename T>
Tensor<T> randn(Shape s, Rng& rng, double std = 1.0) {
    Tensor<T> t(std::move(s));
    for (long i = 0; i < t.numel(); ++i) t.at(i) = static_cast<T>(rng.normal(0.0, std));
    return t;
}

/// Checks d(sum(w ⊙ f(inputs)))/d(inputs): analytic in precision T, central
/// differences on a float64 twin. f must be a generic callable usable with
/// both Tape<T> and Tape<double>.
template <typename T, typename F>
void check_op(const std::string& name, std::vector<Shape> in_shapes, F f, double tol, uint64_t seed = 7) {
    Rng rng(seed);
    ParamStore<double> psd;
    ParamStore<T> pst;
    std::vector<Param<double>*> dparams;
    std::vector<Param<T>*> params;
    for (size_t i = 0; i < in_shapes.size(); ++i) {
        auto& pd = psd.add("in" + std::to_string(i), in_shapes[i], Init::normal, rng, 1.0);
        auto& pt = pst.add("in" + std::to_string(i), in_shapes[i], Init::zeros, rng);
        pt.value = pd.value.template cast<T>();
        dparams.push_back(&pd);
        params.push_back(&pt);
    }
    Tensor<double> w;  // fixed weights make the scalar loss sensitive to every output
    tad::Tape<double> tpd;
    tad::Tape<T> tpt;

    auto run_double = [&]() {
        tpd.reset();
        std::vector<tad::Var<double>> ins;
        for (auto* p : dparams) ins.push_back(use(tpd, *p));
        tad::Var<double> out = f(tpd, ins);
        if (w.empty()) w = randn<double>(out.val().shape, rng, 1.0);
        tad::Var<double> loss = tad::sum_all(tad::mul(out, tpd.constant(w)));
        return loss.val().at(0);
    };
    (void)run_double();  // fix the weight tensor before any grads

    auto run_grads = [&]() {
        for (size_t i = 0; i < params.size(); ++i) params[i]->value = dparams[i]->value.template cast<T>();
        tpt.reset();
        std::vector<tad::Var<T>> ins;
        for (auto* p : params) ins.push_back(use(tpt, *p));
        tad::Var<T> out = f(tpt, ins);
        tad::Var<T> loss = tad::sum_all(tad::mul(out, tpt.constant(w.cast<T>())));
        pst.zero_grads();
        tpt.backward(loss);
        return static_cast<double>(loss.val().at(0));
    };

    auto rep = testutil::grad_check<T>(params, dparams, run_grads, run_double, 60, 1e-5, 1e-4, seed + 1);
    INFO(name, " max_rel=", rep.max_rel, " worst=", rep.worst);
    CHECK(rep.max_rel < tol);
}

}  // namespace

TEST_CASE("elementwise ops: forward values") {
    tad::Tape<double> tp;
    auto a = tp.leaf(Tensor<double>::from({3}, {1.0, -2.0, 0.5}), true);
    auto b = tp.leaf(Tensor<double>::from({3}, {2.0, 3.0, -1.0}), true);
    CHECK(tad::add(a, b).val().at(1) == doctest::Approx(1.0));
    CHECK(tad::sub(a, b).val().at(0) == doctest::Approx(-1.0));
    CHECK(tad::mul(a, b).val().at(2) == doctest::Approx(-0.5));
    CHECK(tad::scale(a, -2.0).val().at(0) == doctest::Approx(-2.0));
    CHECK(tad::relu(a).val().at(1) == 0.0);
    CHECK(tad::sigmoid_v(tp.leaf(Tensor<double>::scalar(0.0), false)).val().at(0) == doctest::Approx(0.5));
}

TEST_CASE("grad: add/mul/scale chain") {
    check_op<double>(
        "chain", {{4, 5}, {4, 5}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::mul(tad::add(in[0], in[1]), tad::scale(in[0], 0.5));
        },
        5e-7);
}

TEST_CASE("grad: activations") {
    check_op<double>(
        "acts", {{6, 3}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::tanh_v(tad::gelu(tad::sigmoid_v(in[0])));
        },
        5e-7);
}

TEST_CASE("grad: linear with bias") {
    check_op<double>(
        "linear", {{2, 3, 4}, {4, 5}, {5}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::linear(in[0], in[1], in[2]);
        },
        5e-7);
}

TEST_CASE("grad: bmm plain and transposed") {
    check_op<double>(
        "bmm", {{2, 3, 4}, {2, 4, 5}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::bmm(in[0], in[1], false);
        },
        5e-7);
    check_op<double>(
        "bmm_t", {{2, 3, 4}, {2, 5, 4}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::bmm(in[0], in[1], true);
        },
        5e-7);
}

TEST_CASE("grad: layer_norm") {
    check_op<double>(
        "ln", {{7, 6}, {6}, {6}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::layer_norm(in[0], in[1], in[2]);
        },
        5e-7);
}

TEST_CASE("grad: reshape/slice/concat/mul_last_bcast/mean_axis1") {
    check_op<double>(
        "shapes", {{2, 3, 6}, {2, 3, 2}},
        [](auto& tp, auto& in) {
            (void)tp;
            auto s1 = tad::slice_last(in[0], 0, 4);
            auto s2 = tad::slice_last(in[0], 2, 6);
            auto cc = tad::concat_last(s1, s2);          // [2,3,8]
            auto rs = tad::reshape(cc, Shape{2, 3, 8});  // no-op view
            auto sc = tad::slice_last(in[1], 0, 1);      // [2,3,1]
            auto mb = tad::mul_last_bcast(rs, sc);       // [2,3,8]
            return tad::mean_axis1(mb);                  // [2,8]
        },
        5e-7);
}

TEST_CASE("grad: embedding") {
    auto ids = std::make_shared<Tensor<long>>(Tensor<long>::from({2, 3}, {0, 2, 1, 3, 3, 0}));
    check_op<double>(
        "embed", {{4, 5}},
        [ids](auto& tp, auto& in) {
            (void)tp;
            return tad::embedding(in[0], ids);
        },
        5e-7);
}

TEST_CASE("grad: rope") {
    auto pos = std::make_shared<Tensor<long>>(Tensor<long>::from({2, 3}, {0, 5, 11, 2, 4, 9}));
    check_op<double>(
        "rope", {{2, 3, 8}},
        [pos](auto& tp, auto& in) {
            (void)tp;
            return tad::rope(in[0], pos, 2);
        },
        5e-7);
}

TEST_CASE("grad: sdpa causal self and plain cross") {
    check_op<double>(
        "sdpa_causal", {{2, 4, 8}, {2, 4, 8}, {2, 4, 8}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::sdpa(in[0], in[1], in[2], 2, true);
        },
        5e-7);
    check_op<double>(
        "sdpa_cross", {{2, 3, 8}, {2, 5, 8}, {2, 5, 8}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::sdpa(in[0], in[1], in[2], 2, false);
        },
        5e-7);
}

TEST_CASE("sdpa causality: output row i ignores later inputs") {
    Rng rng(3);
    tad::Tape<double> tp;
    Tensor<double> q = randn<double>({1, 5, 8}, rng), k = q, v = randn<double>({1, 5, 8}, rng);
    auto out1 = tad::sdpa(tp.leaf(q, false), tp.leaf(k, false), tp.leaf(v, false), 2, true);
    // perturb the last position of q/k/v
    Tensor<double> q2 = q, k2 = k, v2 = v;
    for (long c = 0; c < 8; ++c) {
        q2.at(4 * 8 + c) += 10.0;
        k2.at(4 * 8 + c) -= 3.0;
        v2.at(4 * 8 + c) += 5.0;
    }
    auto out2 = tad::sdpa(tp.leaf(q2, false), tp.leaf(k2, false), tp.leaf(v2, false), 2, true);
    for (long t = 0; t < 4; ++t)
        for (long c = 0; c < 8; ++c) CHECK(out1.val().at(t * 8 + c) == out2.val().at(t * 8 + c));
}

TEST_CASE("grad: concat_pairs + max_pairs + mask") {
    const long B = 2, N = 3;
    auto mask = std::make_shared<Tensor<uint8_t>>(Shape{B, N, N});
    mask->fill(1);
    mask->at((0 * N + 1) * N + 2) = 0;  // drop one edge; diag stays
    check_op<double>(
        "maxagg", {{B, N, 5}},
        [mask](auto& tp, auto& in) {
            (void)tp;
            auto pairs = tad::concat_pairs(in[0]);  // [B,N,N,10]
            return tad::max_pairs(pairs, mask);     // [B,N,10]
        },
        5e-7);
}

TEST_CASE("grad: ce_loss and bce_loss") {
    auto targets = std::make_shared<Tensor<long>>(Tensor<long>::from({6}, {0, 2, 1, 3, 2, 0}));
    Tensor<double> mask_d = Tensor<double>::from({6}, {1, 1, 0, 1, 1, 1});
    check_op<double>(
        "ce", {{6, 4}},
        [targets, mask_d](auto& tp, auto& in) {
            using TT = typename std::decay_t<decltype(tp)>::value_type;
            auto mask = std::make_shared<Tensor<TT>>(mask_d.template cast<TT>());
            return tad::ce_loss(in[0], targets, mask);
        },
        5e-7);
    Tensor<double> bt_d = Tensor<double>::from({5}, {1, 0, 1, 0, 1});
    check_op<double>(
        "bce", {{5}},
        [bt_d](auto& tp, auto& in) {
            using TT = typename std::decay_t<decltype(tp)>::value_type;
            auto bt = std::make_shared<Tensor<TT>>(bt_d.template cast<TT>());
            return tad::bce_loss(in[0], bt, std::shared_ptr<Tensor<TT>>{});
        },
        5e-7);
}

TEST_CASE("float32 composite gradient check vs float64 reference") {
    check_op<float>(
        "composite_f32", {{3, 4}, {4, 6}, {6}},
        [](auto& tp, auto& in) {
            (void)tp;
            return tad::gelu(tad::linear(in[0], in[1], in[2]));
        },
        1e-3);
}

TEST_CASE("shared param used twice accumulates both paths") {
    Rng rng(5);
    ParamStore<double> ps;
    auto& p = ps.add("w", Shape{3}, Init::normal, rng, 1.0);
    tad::Tape<double> tp;
    auto v = use(tp, p);
    auto v2 = use(tp, p);
    CHECK(v.idx == v2.idx);  // same tape node: genuinely shared
    auto loss = tad::sum_all(tad::mul(v, v2));
    ps.zero_grads();
    tp.backward(loss);
    for (long i = 0; i < 3; ++i) CHECK(p.grad.at(i) == doctest::Approx(2.0 * p.value.at(i)));
}

TEST_CASE("adam: converges on a quadratic") {
    Rng rng(9);
    ParamStore<double> ps;
    auto& p = ps.add("x", Shape{4}, Init::normal, rng, 2.0);
    Adam<double> opt(ps.trainable(), 0.05);
    tad::Tape<double> tp;
    for (int step = 0; step < 400; ++step) {
        tp.reset();
        auto x = use(tp, p);
        auto loss = tad::sum_all(tad::mul(x, x));
        opt.zero_grads();
        tp.backward(loss);
        opt.step();
    }
    for (long i = 0; i < 4; ++i) CHECK(std::abs(p.value.at(i)) < 1e-2);
}
