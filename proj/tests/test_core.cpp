#include "support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace hsnpl;
using namespace hsnpl::testing;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DeriveSeedSeparatesTags) {
    EXPECT_NE(derive_seed(1, {0, 1}), derive_seed(1, {1, 0}));
    EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
    EXPECT_EQ(derive_seed(9, {3, 4}), derive_seed(9, {3, 4}));
}

TEST(Rng, UniformAndNormalMoments) {
    Rng r(3);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        su += u;
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
    }
    EXPECT_NEAR(su / n, 0.5, 0.005);
    EXPECT_NEAR(sn / n, 0.0, 0.01);
    EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, PermutationIsPermutation) {
    Rng r(5);
    auto p = r.permutation(50);
    std::vector<std::size_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(50);
    std::iota(iota.begin(), iota.end(), 0);
    EXPECT_EQ(sorted, iota);
}

TEST(Rng, BelowStaysInRange) {
    Rng r(8);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) ++hits[r.below(7)];
    for (int h : hits) EXPECT_GT(h, 800);
}

namespace {

Rng& grng() {
    static Rng r(1234);
    return r;
}

Matrix rnd(Index r, Index c) { return random_matrix(grng(), r, c); }

} // namespace

TEST(Autodiff, MatmulAddSubMul) {
    const auto a = rnd(3, 4), b = rnd(4, 2), c = rnd(3, 2);
    EXPECT_LT(check_op_gradient({a, b, c},
                                [](ad::Tape&, std::vector<ad::Var>& v) {
                                    auto m = ad::matmul(v[0], v[1]);
                                    return ad::sum_all(ad::mul(ad::sub(ad::add(m, v[2]), ad::scale(v[2], 0.3)), m));
                                }),
              1e-6);
}

TEST(Autodiff, TransposeAddRowSliceStack) {
    const auto a = rnd(4, 3), b = rnd(1, 3), c = rnd(2, 3);
    EXPECT_LT(check_op_gradient({a, b, c},
                                [](ad::Tape&, std::vector<ad::Var>& v) {
                                    const auto s = ad::add_row(v[0], v[1]);
                                    std::vector<ad::Var> rows = {ad::slice_rows(s, 1, 2), v[2]};
                                    const auto st = ad::vstack(rows);
                                    std::vector<ad::Var> cols = {st, ad::transpose(ad::transpose(st))};
                                    const auto h = ad::hstack(cols);
                                    return ad::sum_all(ad::mul(h, h));
                                }),
              1e-6);
}

TEST(Autodiff, Activations) {
    const auto a = rnd(5, 3);
    EXPECT_LT(check_op_gradient({a},
                                [](ad::Tape&, std::vector<ad::Var>& v) {
                                    return ad::sum_all(ad::add(ad::add(ad::leaky_relu(v[0]), ad::elu(v[0])), ad::sigmoid(v[0])));
                                }),
              1e-6);
}

TEST(Autodiff, MeanRowsAndNorm) {
    const auto a = rnd(4, 3), b = rnd(2, 2);
    for (bool squared : {false, true})
        EXPECT_LT(check_op_gradient({a, b},
                                    [squared](ad::Tape&, std::vector<ad::Var>& v) {
                                        std::vector<ad::Var> parts = {v[0], v[1]};
                                        return ad::add(ad::sum_all(ad::mul(ad::mean_rows(v[0]), ad::mean_rows(v[0]))),
                                                       ad::l2_norm(parts, squared));
                                    }),
                  1e-6);
}

TEST(Autodiff, L2NormClosedForm) {
    ad::Tape t;
    std::vector<ad::Var> p = {t.variable((Matrix(1, 2) << 3, 4).finished())};
    EXPECT_DOUBLE_EQ(ad::l2_norm(p).scalar(), 5.0);
    EXPECT_DOUBLE_EQ(ad::l2_norm(p, true).scalar(), 25.0);
}

TEST(Autodiff, GatherScatterScaleRows) {
    const auto x = rnd(4, 3), w = rnd(6, 1);
    EXPECT_LT(check_op_gradient({x, w},
                                [](ad::Tape&, std::vector<ad::Var>& v) {
                                    const auto g = ad::gather_rows(v[0], {0, 2, 2, 3, 1, 0});
                                    const auto s = ad::scatter_add_rows(ad::scale_rows(g, v[1]), {1, 1, 0, 2, 4, 0}, 5);
                                    return ad::sum_all(ad::mul(s, s));
                                }),
              1e-6);
}

TEST(Autodiff, ElementIndexing) {
    const auto x = rnd(3, 4);
    EXPECT_LT(check_op_gradient({x},
                                [](ad::Tape&, std::vector<ad::Var>& v) {
                                    const auto e = ad::gather_elements(v[0], {0, 1, 2, 2}, {3, 0, 1, 1});
                                    const auto s = ad::scatter_elements(ad::mul(e, e), {1, 0, 2, 1}, {1, 1, 0, 1}, 3, 2);
                                    return ad::sum_all(ad::mul(s, s));
                                }),
              1e-6);
}

TEST(Autodiff, SegmentSoftmax) {
    const auto s = rnd(7, 1), w = rnd(7, 1);
    ad::Tape t;
    const auto sm = ad::segment_softmax(t.variable(s), {0, 0, 0, 1, 2, 2, 2}, 3);
    EXPECT_NEAR(sm.value()(0) + sm.value()(1) + sm.value()(2), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(sm.value()(3), 1.0);
    EXPECT_LT(check_op_gradient({s, w},
                                [](ad::Tape&, std::vector<ad::Var>& v) {
                                    return ad::sum_all(ad::mul(ad::segment_softmax(v[0], {0, 0, 0, 1, 2, 2, 2}, 3), v[1]));
                                }),
              1e-6);
}

TEST(Autodiff, Losses) {
    const auto z = rnd(4, 2), l = rnd(3, 1);
    EXPECT_LT(check_op_gradient({z, l},
                                [](ad::Tape&, std::vector<ad::Var>& v) {
                                    return ad::add(ad::softmax_cross_entropy(v[0], {0, 2, 3}, {1, 0, 1}), ad::bce_sum(v[1], {1, 0, 1}));
                                }),
              1e-6);
}

TEST(Autodiff, GradientAccumulatesOverReuse) {
    ad::Tape t;
    const auto x = t.variable(Matrix::Constant(1, 1, 3.0));
    const auto y = ad::mul(x, x); // x^2
    const auto z = ad::add(y, x); // x^2 + x
    t.backward(z);
    EXPECT_DOUBLE_EQ(t.gradient(x)(0, 0), 7.0);
}

TEST(Autodiff, ConstantsGetNoGradient) {
    ad::Tape t;
    const auto c = t.constant(Matrix::Constant(1, 1, 2.0));
    const auto x = t.variable(Matrix::Constant(1, 1, 5.0));
    t.backward(ad::mul(c, x));
    EXPECT_DOUBLE_EQ(t.gradient(x)(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(t.gradient(c)(0, 0), 0.0);
}

TEST(Parameters, StoreRejectsDuplicates) {
    ParameterStore s;
    s.add("a", Matrix::Zero(2, 2));
    EXPECT_THROW(s.add("a", Matrix::Zero(1, 1)), ValidationError);
    EXPECT_EQ(s.scalar_count(), 4u);
}
