#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "vaesynth/numcore/adam.hpp"
#include "vaesynth/numcore/grad_check.hpp"
#include "vaesynth/numcore/ops.hpp"
#include "vaesynth/numcore/param_set.hpp"
#include "vaesynth/numcore/rng.hpp"
#include "vaesynth/numcore/tape.hpp"
#include "vaesynth/numcore/tensor.hpp"

using namespace vaesynth;
using namespace vaesynth::numcore;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Direct sliding-window convolution, written independently of the im2col path.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, std::size_t stride, std::size_t pad) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), K = w.dim(2);
    const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
    Tensor<double> y({B, O, Ho, Wo});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    double s = 0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ky = 0; ky < K; ++ky)
                            for (std::size_t kx = 0; kx < K; ++kx) {
                                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                                s += x[((b * C + c) * H + iy) * W + ix] * w[((o * C + c) * K + ky) * K + kx];
                            }
                    y[((b * O + o) * Ho + oy) * Wo + ox] = s;
                }
    return y;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& r) {
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
    return s;
}

struct FdCase {
    OpKind kind;
    std::function<std::vector<Tensor<double>>(Rng&)> inputs;
    OpAttrs attrs;
};

// L = sum(r * f(inputs)); op_backward with upstream r must match central differences.
double max_fd_error(const FdCase& c, Rng& rng) {
    auto in = c.inputs(rng);
    TensorRefs<double> refs;
    for (auto& t : in) refs.push_back(&t);
    const auto y = op_forward<double>(c.kind, refs, c.attrs);
    const auto r = random_tensor(y.shape(), rng);
    const auto grads = op_backward<double>(c.kind, refs, c.attrs, r);
    double worst = 0;
    const double h = 1e-5;
    for (std::size_t k = 0; k < in.size(); ++k) {
        for (std::size_t i = 0; i < in[k].numel(); ++i) {
            const double orig = in[k][i];
            in[k][i] = orig + h;
            const double plus = weighted_sum(op_forward<double>(c.kind, refs, c.attrs), r);
            in[k][i] = orig - h;
            const double minus = weighted_sum(op_forward<double>(c.kind, refs, c.attrs), r);
            in[k][i] = orig;
            worst = std::max(worst, relative_error(grads[k][i], (plus - minus) / (2 * h)));
        }
    }
    return worst;
}

// Values kept away from a kink so central differences stay valid.
Tensor<double> away_from(Shape s, Rng& rng, std::vector<double> kinks, double margin = 0.05) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.data()) {
        bool ok = false;
        while (!ok) {
            v = rng.uniform(-1.5, 1.5);
            ok = true;
            for (double k : kinks) ok = ok && std::abs(v - k) > margin;
        }
    }
    return t;
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
    Tensor<float> t({2, 3}, 1.5f);
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_THROW(Tensor<float>(Shape{}), ShapeError);
    EXPECT_THROW(Tensor<float>(Shape{2, 0}), ShapeError);
    EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    EXPECT_FALSE(t.has_grad());
    t.zero_grad();
    ASSERT_TRUE(t.has_grad());
    EXPECT_EQ(t.grad().size(), t.numel());
    EXPECT_THROW(t.reshaped({4}), ShapeError);
    EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
    EXPECT_THROW(t.item(), ShapeError);
    EXPECT_EQ(Tensor<float>::scalar(2.f).item(), 2.f);
}

TEST(Rng, SameSeedAndLabelGiveSameDraws) {
    Rng a = Rng::stream(7, "shuffle"), b = Rng::stream(7, "shuffle");
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, KnownValuesArePlatformIndependent) {
    // first splitmix64 output for state 0 and the FNV-1a reference vectors
    EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, StreamsAreIndependent) {
    Rng shuffle1 = Rng::stream(42, "shuffle");
    std::vector<std::uint64_t> before;
    for (int i = 0; i < 50; ++i) before.push_back(shuffle1.next_u64());

    Rng reparam = Rng::stream(42, "reparam");
    for (int i = 0; i < 12345; ++i) reparam.next_u64();
    Rng shuffle2 = Rng::stream(42, "shuffle");
    for (int i = 0; i < 50; ++i) EXPECT_EQ(shuffle2.next_u64(), before[static_cast<std::size_t>(i)]);
    EXPECT_NE(derive_seed(42, "shuffle"), derive_seed(42, "reparam"));
}

TEST(Rng, UniformAndNormalMoments) {
    Rng rng(3);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    EXPECT_NEAR(su / n, 0.5, 0.005);
    EXPECT_NEAR(sn / n, 0.0, 0.01);
    EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, BelowIsInRangeAndShuffleIsPermutation) {
    Rng rng(11);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 500);
    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i;
    rng.shuffle(v);
    EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 100u);
}

TEST(Ops, MatmulIdentity) {
    Tensor<double> I({2, 2}, std::vector<double>{1, 0, 0, 1});
    Tensor<double> A({2, 2}, std::vector<double>{3, -1, 2.5, 7});
    EXPECT_EQ(op_forward<double>(OpKind::matmul, {&I, &A}), A);
}

TEST(Ops, MatmulRejectsInnerMismatchNamingBothShapes) {
    Tensor<double> a({2, 3}), b({2, 2});
    try {
        op_forward<double>(OpKind::matmul, {&a, &b});
        FAIL();
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
        EXPECT_NE(msg.find("[2x2]"), std::string::npos);
    }
}

TEST(Ops, UnknownKindRejected) {
    EXPECT_THROW(parse_op_kind("deconv"), ValidationError);
    EXPECT_EQ(parse_op_kind("conv2d"), OpKind::conv2d);
    Tensor<double> a({1});
    EXPECT_THROW(op_forward<double>(static_cast<OpKind>(999), {&a}), ValidationError);
}

TEST(Ops, ConvScalingCase) {
    Tensor<double> x({1, 1, 3, 3}, 1.0), w({1, 1, 1, 1}, 2.0);
    const auto y = op_forward<double>(OpKind::conv2d, {&x, &w}, OpAttrs{.stride = 1, .pad = 0});
    EXPECT_EQ(y, Tensor<double>({1, 1, 3, 3}, 2.0));
}

TEST(Ops, ConvMatchesNaiveSlidingWindow) {
    Rng rng(5);
    for (std::size_t stride : {1u, 2u}) {
        for (std::size_t pad : {0u, 1u}) {
            const auto x = random_tensor({2, 3, 8, 8}, rng);
            const auto w = random_tensor({4, 3, 3, 3}, rng);
            const auto y = op_forward<double>(OpKind::conv2d, {&x, &w}, OpAttrs{.stride = stride, .pad = pad});
            const auto ref = naive_conv(x, w, stride, pad);
            ASSERT_EQ(y.shape(), ref.shape());
            for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
        }
    }
}

TEST(Ops, ConvRejectsTooSmallInputAndChannelMismatch) {
    Tensor<double> x({1, 1, 2, 2}), w({1, 1, 3, 3}), w2({1, 2, 1, 1});
    EXPECT_THROW(op_forward<double>(OpKind::conv2d, {&x, &w}), ShapeError);
    EXPECT_THROW(op_forward<double>(OpKind::conv2d, {&x, &w2}), ShapeError);
    EXPECT_NO_THROW(op_forward<double>(OpKind::conv2d, {&x, &w}, OpAttrs{.pad = 1}));
}

TEST(Ops, MatmulAndConvAreLinear) {
    Rng rng(9);
    const auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), m = random_tensor({4, 2}, rng);
    Tensor<double> ab = a;
    for (std::size_t i = 0; i < ab.numel(); ++i) ab[i] += b[i];
    const auto lhs = op_forward<double>(OpKind::matmul, {&ab, &m});
    const auto ya = op_forward<double>(OpKind::matmul, {&a, &m}), yb = op_forward<double>(OpKind::matmul, {&b, &m});
    for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], ya[i] + yb[i], 1e-6 * std::abs(lhs[i]) + 1e-15);

    const auto x1 = random_tensor({1, 2, 6, 6}, rng), x2 = random_tensor({1, 2, 6, 6}, rng), w = random_tensor({3, 2, 3, 3}, rng);
    Tensor<double> xs = x1;
    for (std::size_t i = 0; i < xs.numel(); ++i) xs[i] += x2[i];
    const OpAttrs at{.stride = 2, .pad = 1};
    const auto c = op_forward<double>(OpKind::conv2d, {&xs, &w}, at);
    const auto c1 = op_forward<double>(OpKind::conv2d, {&x1, &w}, at), c2 = op_forward<double>(OpKind::conv2d, {&x2, &w}, at);
    for (std::size_t i = 0; i < c.numel(); ++i) EXPECT_NEAR(c[i], c1[i] + c2[i], 1e-6 * std::abs(c[i]) + 1e-15);
}

TEST(Ops, ReluAndSigmoidBackwardSpotValues) {
    Tensor<double> x({1}, -1.0), up({1}, 5.0);
    EXPECT_EQ(op_backward<double>(OpKind::relu, {&x}, {}, up)[0][0], 0.0);
    Tensor<double> z({1}, 0.0), one({1}, 1.0);
    EXPECT_DOUBLE_EQ(op_backward<double>(OpKind::sigmoid, {&z}, {}, one)[0][0], 0.25);
}

TEST(Ops, UpstreamShapeMismatchRejected) {
    Tensor<double> x({2, 2}), up({3});
    EXPECT_THROW(op_backward<double>(OpKind::relu, {&x}, {}, up), ShapeError);
}

TEST(Ops, UpsampleRepeatsPixels) {
    Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const auto y = op_forward<double>(OpKind::upsample2x_nearest, {&x});
    const std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    EXPECT_EQ(y.vec(), want);
}

TEST(Ops, EveryKindMatchesFiniteDifferences) {
    const auto rnd = [](Shape s) { return [s](Rng& r) { return std::vector<Tensor<double>>{random_tensor(s, r)}; }; };
    std::vector<FdCase> cases{
        {OpKind::matmul, [](Rng& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({4, 2}, r)}; }, {}},
        {OpKind::conv2d, [](Rng& r) { return std::vector{random_tensor({2, 2, 5, 5}, r), random_tensor({3, 2, 3, 3}, r)}; },
         OpAttrs{.stride = 2, .pad = 1}},
        {OpKind::conv2d, [](Rng& r) { return std::vector{random_tensor({1, 2, 4, 4}, r), random_tensor({2, 2, 3, 3}, r)}; },
         OpAttrs{.stride = 1, .pad = 0}},
        {OpKind::upsample2x_nearest, rnd({1, 2, 3, 3}), {}},
        {OpKind::add_bias, [](Rng& r) { return std::vector{random_tensor({2, 3, 2, 2}, r), random_tensor({3}, r)}; }, {}},
        {OpKind::relu, [](Rng& r) { return std::vector{away_from({3, 4}, r, {0.0})}; }, {}},
        {OpKind::sigmoid, rnd({3, 4}), {}},
        {OpKind::reshape, rnd({2, 6}), OpAttrs{.shape = {3, 4}}},
        {OpKind::mean_square_diff, [](Rng& r) { return std::vector{random_tensor({2, 5}, r), random_tensor({2, 5}, r)}; }, {}},
        {OpKind::sum_square, rnd({7}), {}},
        {OpKind::clamp, [](Rng& r) { return std::vector{away_from({3, 4}, r, {-0.5, 0.5})}; }, OpAttrs{.lo = -0.5, .hi = 0.5}},
        {OpKind::split_cols, rnd({3, 6}), OpAttrs{.offset = 2, .count = 3}},
        {OpKind::reparameterize,
         [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({2, 3}, r), random_tensor({2, 3}, r)}; }, {}},
        {OpKind::kld_gaussian, [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({2, 3}, r)}; }, {}},
        {OpKind::add, [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({2, 3}, r)}; }, {}},
        {OpKind::scale, rnd({4}), OpAttrs{.alpha = -2.5}},
        {OpKind::softmax_cross_entropy, rnd({4, 3}), OpAttrs{.labels = {0, 2, 1, 2}}},
    };
    Rng rng(2024);
    for (const auto& c : cases) {
        double worst = 0;
        for (int trial = 0; trial < 100; ++trial) worst = std::max(worst, max_fd_error(c, rng));
        EXPECT_LT(worst, 1e-4) << op_name(c.kind);
    }
}

TEST(Ops, ForwardIsDeterministic) {
    Rng rng(1);
    const auto x = random_tensor({2, 3, 8, 8}, rng), w = random_tensor({4, 3, 3, 3}, rng);
    EXPECT_EQ(op_forward<double>(OpKind::conv2d, {&x, &w}, OpAttrs{.stride = 2, .pad = 1}),
              op_forward<double>(OpKind::conv2d, {&x, &w}, OpAttrs{.stride = 2, .pad = 1}));
}

TEST(Tape, BackwardAccumulatesIntoParameters) {
    Tensor<double> p({2}, std::vector<double>{1.0, -2.0});
    for (int rep = 0; rep < 2; ++rep) {
        Tape<double> tape;
        tape.backward(tape.apply(OpKind::sum_square, {tape.parameter(p)}));
    }
    // two passes of d/dp sum(p^2) = 2p each
    EXPECT_DOUBLE_EQ(p.grad()[0], 4.0);
    EXPECT_DOUBLE_EQ(p.grad()[1], -8.0);
}

TEST(Tape, SharedInputGetsSummedGradient) {
    Tensor<double> p({1}, 3.0);
    Tape<double> tape;
    const auto v = tape.parameter(p);
    tape.backward(tape.apply(OpKind::add, {tape.apply(OpKind::sum_square, {v}), tape.apply(OpKind::scale, {v}, OpAttrs{.alpha = 4.0})}));
    EXPECT_DOUBLE_EQ(p.grad()[0], 2 * 3.0 + 4.0);
}

TEST(Tape, NonScalarRootRejected) {
    Tensor<double> p({3});
    Tape<double> tape;
    EXPECT_THROW(tape.backward(tape.apply(OpKind::relu, {tape.parameter(p)})), ShapeError);
}

TEST(ParamSetTest, NamesUniqueAndOrderStable) {
    ParamSet<float> ps;
    ps.add("a", Tensor<float>({2}));
    ps.add("b", Tensor<float>({3}, 2.f));
    EXPECT_THROW(ps.add("a", Tensor<float>({1})), ValidationError);
    std::vector<std::string> names;
    for (const auto& p : ps) {
        names.push_back(p.name);
        EXPECT_EQ(p.m.shape(), p.value.shape());
        EXPECT_EQ(p.v.shape(), p.value.shape());
    }
    EXPECT_EQ(names, (std::vector<std::string>{"a", "b"}));
    EXPECT_DOUBLE_EQ(ps.sum_squares(), 12.0);
    EXPECT_EQ(ps.element_count(), 5u);
}

TEST(Adam, ZeroGradLeavesParamsUnchanged) {
    ParamSet<double> ps;
    ps.add("w", Tensor<double>({3}, std::vector<double>{1, -2, 0.5}));
    const auto before = ps.at("w");
    ps.zero_grad();
    adam_step(ps, AdamConfig{}, 1);
    EXPECT_EQ(ps.at("w").vec(), before.vec());
}

TEST(Adam, SingleStepHandOracle) {
    // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1; p -= 0.1 * 1 / (1 + 1e-8)
    ParamSet<double> ps;
    ps.add("p", Tensor<double>({1}, 0.0));
    ps.zero_grad();
    ps.at("p").grad()[0] = 1.0;
    adam_step(ps, AdamConfig{.lr = 0.1}, 1);
    EXPECT_NEAR(ps.at("p")[0], -0.1 / (1.0 + 1e-8), 1e-15);
    EXPECT_EQ(ps.at("p").grad()[0], 0.0);  // zeroed after the step
}

TEST(Adam, MomentumStateEvolves) {
    ParamSet<double> ps;
    ps.add("p", Tensor<double>({1}, 0.0));
    ps.zero_grad();
    ps.at("p").grad()[0] = 1.0;
    adam_step(ps, AdamConfig{.lr = 0.1}, 1);
    const double first = ps.at("p")[0];
    ps.at("p").grad()[0] = 1.0;
    adam_step(ps, AdamConfig{.lr = 0.1}, 2);
    const double second = ps.at("p")[0] - first;
    EXPECT_NE(first, 0.0);
    EXPECT_NE(second, first);
    EXPECT_GT(ps.find("p")->v[0], 0.001);
}

TEST(Adam, MissingGradientNamesParameter) {
    ParamSet<double> ps;
    ps.add("decoder.bias", Tensor<double>({1}));
    try {
        adam_step(ps, AdamConfig{}, 1);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("decoder.bias"), std::string::npos);
    }
    ps.zero_grad();
    EXPECT_THROW(adam_step(ps, AdamConfig{}, 0), ValidationError);
}

TEST(GradCheck, QuadraticIsExact) {
    ParamSet<double> ps;
    ps.add("p", Tensor<double>({1}, 3.0));
    const auto report = grad_check(
        [](Tape<double>& t, ParamSet<double>& p) { return t.apply(OpKind::sum_square, {t.parameter(p.at("p"))}); }, ps,
        1e-6);
    EXPECT_TRUE(report.passed());
    EXPECT_NEAR(report.worst_analytic == 0 ? 6.0 : report.worst_analytic, 6.0, 1e-9);
    EXPECT_EQ(report.elements_checked, 1u);
    EXPECT_NEAR(ps.at("p").grad()[0], 6.0, 1e-12);
}

TEST(GradCheck, EmptyParamSetGivesEmptyReport) {
    ParamSet<double> ps;
    const auto report = grad_check(
        [](Tape<double>& t, ParamSet<double>&) { return t.constant(Tensor<double>::scalar(1.0)); }, ps, 1e-4);
    EXPECT_EQ(report.elements_checked, 0u);
    EXPECT_EQ(report.max_rel_error, 0.0);
    EXPECT_TRUE(report.passed());
}

TEST(GradCheck, NonScalarOutputRejected) {
    ParamSet<double> ps;
    ps.add("p", Tensor<double>({2}, 1.0));
    EXPECT_THROW(grad_check([](Tape<double>& t, ParamSet<double>& p) { return t.parameter(p.at("p")); }, ps, 1e-4),
                 ShapeError);
}

TEST(GradCheck, DetectsAWrongGradient) {
    // the analytic pass and the finite-difference passes see different graphs
    ParamSet<double> ps;
    ps.add("p", Tensor<double>({1}, 2.0));
    bool perturbed = false;
    const auto report = grad_check(
        [&](Tape<double>& t, ParamSet<double>& p) {
            const double alpha = perturbed ? 3.0 : 1.0;
            perturbed = true;
            return t.apply(OpKind::sum_square, {t.apply(OpKind::scale, {t.parameter(p.at("p"))}, OpAttrs{.alpha = alpha})});
        },
        ps, 1e-4);
    EXPECT_FALSE(report.passed());
    EXPECT_EQ(report.worst_parameter, "p");
}
