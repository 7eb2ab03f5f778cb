#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mgcn/error.hpp"
#include "mgcn/manifold.hpp"
#include "test_support.hpp"

using namespace mgcn;
using mgcn::testing::random_symmetric;
using mgcn::testing::random_tensor;

namespace {

double scalar_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

// Random similarity matrix with the SimilarityBlock invariants.
Tensor random_similarity(std::mt19937_64& rng, std::size_t n) {
    Tensor s = random_symmetric(rng, n);
    for (std::size_t i = 0; i < n; ++i) s(i, i) = 1.0;
    return s;
}

double trace_penalty(const std::vector<Tensor>& z, const SimilarityBlock& block) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : z) vars.push_back(tape.constant(t));
    return manifold_penalty_trace(stack_embeddings(vars, block.subjects), block).value().item();
}

} // namespace

TEST(SubjectSimilarity, SelfAndAffine) {
    std::mt19937_64 rng(1);
    const Tensor a = random_symmetric(rng, 5);
    EXPECT_NEAR(subject_similarity(a, a), 1.0, 1e-15);
    Tensor b = a;
    for (double& v : b.values()) v = 3.0 * v + 0.25;
    EXPECT_NEAR(subject_similarity(a, b), 1.0, 1e-14);
}

TEST(SubjectSimilarity, MatchesScalarPearsonOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor a = random_symmetric(rng, 4), b = random_symmetric(rng, 4);
        const double expected = std::abs(scalar_pearson(a.values(), b.values()));
        EXPECT_NEAR(subject_similarity(a, b), expected, 1e-12);
    }
}

TEST(SubjectSimilarity, ZeroVarianceIsAnError) {
    EXPECT_THROW(subject_similarity(Tensor(3, 3, 0.2), Tensor::identity(3)), ValidationError);
}

TEST(AssembleBlock, SingleModalityIsScaledSimilarity) {
    std::mt19937_64 rng(3);
    const Tensor s = random_similarity(rng, 4);
    SimilarityBlock b = assemble_block({s}, 0.7, 0.3);
    EXPECT_LT(dense::max_abs_diff(b.s, dense::scale(s, 0.3)), 1e-15);
}

TEST(AssembleBlock, ZeroEtaDisablesRegularizer) {
    std::mt19937_64 rng(4);
    SimilarityBlock b = assemble_block({random_similarity(rng, 3), random_similarity(rng, 3)}, 0.0, 0.0);
    EXPECT_EQ(b.laplacian, Tensor(6, 6));
    EXPECT_EQ(trace_penalty({random_tensor(rng, 3, 4), random_tensor(rng, 3, 4)}, b), 0.0);
}

TEST(AssembleBlock, HandTwoByTwoBlocks) {
    const Tensor s1{{1.0, 0.5}, {0.5, 1.0}};
    const Tensor s2{{1.0, 0.25}, {0.25, 1.0}};
    SimilarityBlock b = assemble_block({s1, s2}, 2.0, 3.0);
    // S1 S2 = [[1.125, 0.75], [0.75, 1.125]], S2 S1 is the same here.
    const Tensor expected{{3.0, 1.5, 2.25, 1.5},
                          {1.5, 3.0, 1.5, 2.25},
                          {2.25, 1.5, 3.0, 0.75},
                          {1.5, 2.25, 0.75, 3.0}};
    EXPECT_LT(dense::max_abs_diff(b.s, expected), 1e-15);
    EXPECT_NEAR(b.laplacian(0, 0), 1.5 + 2.25 + 1.5, 1e-15);
}

TEST(AssembleBlock, RejectsInconsistentSizesAndNegativeEta) {
    std::mt19937_64 rng(5);
    EXPECT_THROW(assemble_block({random_similarity(rng, 3), random_similarity(rng, 4)}, 1.0, 1.0), ValidationError);
    EXPECT_THROW(assemble_block({random_similarity(rng, 3)}, -1.0, 1.0), ValidationError);
}

TEST(AssembleBlock, LaplacianRowSumsZeroAndPsd) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + trial % 3, n = 2 + trial % 5;
        std::vector<Tensor> sims;
        for (std::size_t k = 0; k < m; ++k) sims.push_back(random_similarity(rng, n));
        SimilarityBlock b = assemble_block(sims, 0.01 * (1 + trial % 4), 0.02);
        EXPECT_TRUE(dense::is_symmetric(b.s, 1e-14));
        Eigen::MatrixXd l(m * n, m * n);
        for (std::size_t i = 0; i < m * n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < m * n; ++j) {
                row += b.laplacian(i, j);
                l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = b.laplacian(i, j);
            }
            EXPECT_NEAR(row, 0.0, 1e-13);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
    }
}

TEST(Penalty, PairwiseHandValue) {
    const std::vector<Tensor> z{Tensor{{1.0, 0.0}, {0.0, 0.0}}};
    const std::vector<Tensor> s{Tensor{{1.0, 0.5}, {0.5, 1.0}}};
    EXPECT_DOUBLE_EQ(manifold_penalty_pairwise(z, s, 0.0, 1.0), 0.5);
    EXPECT_NEAR(trace_penalty(z, assemble_block(s, 0.0, 1.0)), 0.5, 1e-15);
}

TEST(Penalty, IdenticalRowsGiveZero) {
    std::mt19937_64 rng(7);
    const Tensor row = random_tensor(rng, 1, 6);
    Tensor z(3, 6);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 6; ++c) z(i, c) = row[c];
    std::vector<Tensor> sims{random_similarity(rng, 3), random_similarity(rng, 3)};
    SimilarityBlock b = assemble_block(sims, 0.4, 0.9);
    EXPECT_NEAR(trace_penalty({z, z}, b), 0.0, 1e-12);
    EXPECT_NEAR(manifold_penalty_pairwise(std::vector<Tensor>{z, z}, sims, 0.4, 0.9), 0.0, 1e-12);
}

TEST(Penalty, TraceEqualsPairwiseOnRandomInstances) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> eta(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 1 + trial % 3, n = 2 + trial % 6, width = 1 + trial % 5;
        std::vector<Tensor> sims, z;
        for (std::size_t k = 0; k < m; ++k) {
            sims.push_back(random_similarity(rng, n));
            z.push_back(random_tensor(rng, n, width));
        }
        const double e1 = eta(rng), e2 = eta(rng);
        const double pairwise = manifold_penalty_pairwise(z, sims, e1, e2);
        const double traced = trace_penalty(z, assemble_block(sims, e1, e2));
        EXPECT_GE(traced, -1e-9);
        EXPECT_LE(std::abs(traced - pairwise), 1e-10 * std::max(std::abs(pairwise), 1e-300)) << "trial " << trial;
    }
}

TEST(Penalty, GradientIsLPlusLTransposeZ) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Tensor> sims{random_similarity(rng, 4), random_similarity(rng, 4)};
        SimilarityBlock b = assemble_block(sims, 0.3, 0.8);
        Tape tape;
        Var z1 = tape.parameter(random_tensor(rng, 4, 3)), z2 = tape.parameter(random_tensor(rng, 4, 3));
        std::vector<Var> parts{z1, z2};
        StackedEmbeddings st = stack_embeddings(parts, b.subjects);
        Var r = manifold_penalty_trace(st, b);
        tape.backward(r);
        const Tensor expected =
            dense::matmul(dense::add(b.laplacian, dense::transpose(b.laplacian)), st.z.value());
        EXPECT_LT(dense::max_abs_diff(st.z.grad(), expected), 1e-12);
        EXPECT_LT(gradient_check(tape, r, z1, 1e-5, 1e-6).max_rel_error, 1e-6);
        EXPECT_LT(gradient_check(tape, r, z2, 1e-5, 1e-6).max_rel_error, 1e-6);
    }
}

TEST(Penalty, RejectsRowOrderMismatch) {
    std::mt19937_64 rng(10);
    SimilarityBlock b = assemble_block({random_similarity(rng, 3)}, 0.0, 1.0, {4, 7, 9});
    Tape tape;
    std::vector<Var> z{tape.constant(random_tensor(rng, 3, 2))};
    EXPECT_THROW(manifold_penalty_trace(stack_embeddings(z, {7, 4, 9}), b), ValidationError);
    EXPECT_NO_THROW(manifold_penalty_trace(stack_embeddings(z, {4, 7, 9}), b));
}

TEST(Penalty, SimilarityMatrixHasUnitDiagonal) {
    std::mt19937_64 rng(11);
    std::vector<Tensor> fcs;
    for (int i = 0; i < 5; ++i) fcs.push_back(random_symmetric(rng, 4));
    std::vector<const Tensor*> ptrs;
    for (const auto& f : fcs) ptrs.push_back(&f);
    const Tensor s = similarity_matrix(ptrs);
    EXPECT_TRUE(dense::is_symmetric(s, 0.0));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(s(i, i), 1.0);
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_GE(s(i, j), 0.0);
            EXPECT_LE(s(i, j), 1.0);
        }
    }
}
