#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hcost/model.hpp"
#include "hcost/rng.hpp"
#include "hcost/scene.hpp"
#include "hcost/tensor.hpp"

using namespace hcost;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Plain-loop m x k times k x n product for oracle computations.
std::vector<double> mm(const std::vector<double>& a, const std::vector<double>& b,
                       std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t l = 0; l < k; ++l) c[i * n + j] += a[i * k + l] * b[l * n + j];
    return c;
}

std::vector<double> softmax_row_oracle(std::vector<double> row) {
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (auto& v : row) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : row) v /= z;
    return row;
}

std::vector<double> layer_norm_oracle(const std::vector<double>& x,
                                      const std::vector<double>& gamma,
                                      const std::vector<double>& beta, std::size_t m,
                                      std::size_t n, double eps = 1e-5) {
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0;
        for (std::size_t j = 0; j < n; ++j) mean += x[i * n + j];
        mean /= static_cast<double>(n);
        double var = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = x[i * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j)
            out[i * n + j] = gamma[j] * (x[i * n + j] - mean) * inv + beta[j];
    }
    return out;
}

std::vector<ObjectRecord> random_objects(std::size_t n, Rng& rng, std::size_t n_p = 16) {
    std::vector<ObjectRecord> objs;
    for (std::size_t i = 0; i < n; ++i) {
        ObjectRecord o;
        o.id = static_cast<int>(i);
        o.class_id = static_cast<int>(rng.uniform_int(0, 11));
        o.attribute_id = static_cast<int>(rng.uniform_int(0, 3));
        o.centroid = {rng.uniform(0.5, 7.5), rng.uniform(0.5, 7.5), rng.uniform(0.3, 2.5)};
        o.size = {rng.uniform(0.4, 1.2), rng.uniform(0.4, 1.2), rng.uniform(0.3, 1.0)};
        o.points = random_vec(n_p * 6, rng, 0.0, 1.0);
        objs.push_back(std::move(o));
    }
    return objs;
}

}  // namespace

TEST_CASE("compute_pairwise_spatial conventions") {
    std::vector<std::array<double, 3>> same = {{1, 2, 0.5}, {1, 2, 0.5}};
    auto p = compute_pairwise_spatial(same);
    for (std::size_t idx : {std::size_t{0}, std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
        const double* pij = p.data() + idx * 5;
        CHECK(pij[0] == 0.0);
        CHECK(pij[1] == 0.0);
        CHECK(pij[2] == 1.0);
        CHECK(pij[3] == 0.0);
        CHECK(pij[4] == 1.0);
    }

    std::vector<std::array<double, 3>> axis = {{0, 0, 0}, {1, 0, 0}};
    auto q = compute_pairwise_spatial(axis);
    const double* p01 = q.data() + (0 * 2 + 1) * 5;
    CHECK(p01[0] == doctest::Approx(1.0));
    CHECK(p01[1] == doctest::Approx(0.0));
    CHECK(p01[2] == doctest::Approx(1.0));
    CHECK(p01[3] == doctest::Approx(0.0));
    CHECK(p01[4] == doctest::Approx(1.0));

    Rng rng(4);
    std::vector<std::array<double, 3>> c;
    for (int i = 0; i < 5; ++i)
        c.push_back({rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0, 3)});
    auto r = compute_pairwise_spatial(c);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(r[(i * 5 + j) * 5] == doctest::Approx(r[(j * 5 + i) * 5]).epsilon(1e-12));
}

TEST_CASE("text embedder shape, determinism, positional sensitivity, errors") {
    ModelConfig cfg;
    Rng rng(1);
    TextEmbedder te(cfg, rng);

    std::vector<std::size_t> toks = {3, 1, 4, 1, 5, 9, 2};
    Tensor a = te.encode(toks);
    CHECK(a.shape() == std::vector<std::size_t>{7, 64});
    Tensor b = te.encode(toks);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));

    std::vector<std::size_t> swapped = {1, 3, 4, 1, 5, 9, 2};
    Tensor c = te.encode(swapped);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.at(i) != c.at(i)) differs = true;
    CHECK(differs);

    CHECK_THROWS_AS(te.encode({99999}), DataError);
    CHECK_THROWS_AS(te.encode(std::vector<std::size_t>(25, 1)), DataError);
    CHECK_THROWS_AS(te.encode({}), DataError);
}

TEST_CASE("point encoder is exactly permutation invariant and duplication invariant") {
    ModelConfig cfg;
    Rng rng(2);
    PointEncoder pe(cfg, rng);
    Rng orng(3);
    auto objs = random_objects(3, orng);

    Tensor base = pe.encode(objs);
    CHECK(base.shape() == std::vector<std::size_t>{3, 64});

    auto shuffled = objs;
    for (auto& o : shuffled) {
        // Reverse the point order; rows of 6 doubles move as units.
        const std::size_t n_p = o.points.size() / 6;
        std::vector<double> rev(o.points.size());
        for (std::size_t p = 0; p < n_p; ++p)
            std::copy_n(o.points.begin() + static_cast<long>(p * 6), 6,
                        rev.begin() + static_cast<long>((n_p - 1 - p) * 6));
        o.points = std::move(rev);
    }
    Tensor perm = pe.encode(shuffled);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(base.at(i) == perm.at(i));

    auto doubled = objs;
    for (auto& o : doubled) {
        auto copy = o.points;
        o.points.insert(o.points.end(), copy.begin(), copy.end());
    }
    Tensor dup = pe.encode(doubled);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(base.at(i) == dup.at(i));

    // Distinct point clouds generically produce distinct rows.
    bool rows_differ = false;
    for (std::size_t j = 0; j < 64; ++j)
        if (base.at(0 * 64 + j) != base.at(1 * 64 + j)) rows_differ = true;
    CHECK(rows_differ);

    ObjectRecord empty;
    CHECK_THROWS_AS(pe.encode({empty}), DataError);
}

TEST_CASE("semantic encoder linearity fixtures") {
    ModelConfig cfg;
    Rng rng(5);
    SemanticEncoder se(cfg, rng);
    Rng orng(6);
    auto objs = random_objects(2, orng);
    objs[1] = objs[0];
    objs[1].id = 1;

    Tensor out = se.encode(objs);
    for (std::size_t j = 0; j < 64; ++j) CHECK(out.at(j) == out.at(64 + j));

    // Records differing only in class differ by a fixed weight-row difference.
    auto objs2 = objs;
    objs2[1].class_id = (objs2[1].class_id + 1) % 12;
    Tensor out2 = se.encode(objs2);
    const auto& w = se.w.data();  // 22 x 64
    const std::size_t c0 = static_cast<std::size_t>(objs2[0].class_id);
    const std::size_t c1 = static_cast<std::size_t>(objs2[1].class_id);
    for (std::size_t j = 0; j < 64; ++j) {
        const double expected = w[c1 * 64 + j] - w[c0 * 64 + j];
        CHECK(out2.at(64 + j) - out2.at(j) == doctest::Approx(expected).epsilon(1e-12));
    }

    // Zero weights -> zero output.
    SemanticEncoder zero = se;
    std::fill(zero.w.data().begin(), zero.w.data().end(), 0.0);
    std::fill(zero.b.data().begin(), zero.b.data().end(), 0.0);
    Tensor z = zero.encode(objs);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.at(i) == 0.0);

    ObjectRecord bad = objs[0];
    bad.class_id = 12;
    CHECK_THROWS_AS(se.encode({bad}), DataError);
}

TEST_CASE("spatial attention reduces to plain softmax attention when saturated") {
    ModelConfig cfg;
    cfg.d = 16;
    Rng prng(7);
    GroundingNetwork net(cfg, InputMode::Semantic, 7);
    FusionBlock& blk = net.fusion[0];

    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 4));
        Tensor x = Tensor::constant({n, 16}, random_vec(n * 16, rng));
        Tensor pooled = Tensor::constant({1, 16}, random_vec(16, rng));
        std::vector<std::array<double, 3>> cents;
        for (std::size_t i = 0; i < n; ++i)
            cents.push_back({rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0, 3)});
        const auto spatial = compute_pairwise_spatial(cents);

        const double saved = blk.b_spatial.at(0);
        blk.b_spatial.data()[0] = 40.0;  // gate saturates at 1
        auto out = spatial_attention(x, pooled, spatial, n, blk);
        blk.b_spatial.data()[0] = saved;

        // Plain-scaled-dot-product reference.
        const auto q = mm(x.data(), blk.wq.data(), n, 16, 16);
        const auto k = mm(x.data(), blk.wk.data(), n, 16, 16);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(n);
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0;
                for (std::size_t l = 0; l < 16; ++l) dot += q[i * 16 + l] * k[j * 16 + l];
                row[j] = dot / 4.0;  // sqrt(16)
            }
            const auto ref = softmax_row_oracle(row);
            for (std::size_t j = 0; j < n; ++j)
                CHECK(std::abs(out.a_fused.at(i * n + j) - ref[j]) < 1e-6);
        }
    }
}

TEST_CASE("spatial attention suppresses pairs whose gate hits the floor") {
    ModelConfig cfg;
    cfg.d = 16;
    GroundingNetwork net(cfg, InputMode::Semantic, 9);
    FusionBlock& blk = net.fusion[0];
    blk.b_spatial.data()[0] = -40.0;  // gate ~ 0 everywhere

    Rng rng(10);
    const std::size_t n = 3;
    Tensor x = Tensor::constant({n, 16}, random_vec(n * 16, rng));
    Tensor pooled = Tensor::constant({1, 16}, random_vec(16, rng));
    std::vector<std::array<double, 3>> cents = {{1, 1, 1}, {2, 2, 1}, {6, 6, 2}};
    auto out = spatial_attention(x, pooled, compute_pairwise_spatial(cents), n, blk);
    // With every gate at the clamp floor the log terms are equal, so rows stay
    // finite and normalized; uniform suppression must not produce NaN.
    for (std::size_t i = 0; i < n * n; ++i) CHECK(std::isfinite(out.a_fused.at(i)));

    // Saturate all gates except one pair forced to the floor via ws = 0 and a
    // per-instance check on the fused map: suppressed entry is ~0.
    std::fill(blk.ws.data().begin(), blk.ws.data().end(), 0.0);
    blk.b_spatial.data()[0] = 40.0;
    auto open = spatial_attention(x, pooled, compute_pairwise_spatial(cents), n, blk);
    // Now apply log floor to one pair by saturating the gate negatively for it:
    // emulate with direct comparison — entries where A_spatial = 1e-9 vanish.
    Tensor a_sp = Tensor::constant({n, n}, std::vector<double>(n * n, 1.0));
    a_sp.data()[0 * n + 1] = 1e-9;
    // log(1e-9) ~ -20.7, dominating the score scale here (|scores| < ~5).
    Tensor fused = softmax_rows(add(log_clamped(a_sp),
                                    Tensor::constant({n, n}, std::vector<double>(n * n, 0.0))));
    CHECK(fused.at(0 * n + 1) < 1e-6);
    CHECK(open.a_fused.at(0 * n + 1) > 1e-6);
}

TEST_CASE("spatial attention matches a straight-line re-implementation") {
    ModelConfig cfg;
    cfg.d = 16;
    GroundingNetwork net(cfg, InputMode::Semantic, 11);
    const FusionBlock& blk = net.fusion[0];

    Rng rng(12);
    const std::size_t n = 2, d = 16;
    Tensor x = Tensor::constant({n, d}, random_vec(n * d, rng));
    Tensor pooled = Tensor::constant({1, d}, random_vec(d, rng));
    std::vector<std::array<double, 3>> cents = {{1, 2, 0.5}, {4, 5, 1.5}};
    const auto spatial = compute_pairwise_spatial(cents);

    auto out = spatial_attention(x, pooled, spatial, n, blk);

    // Independent oracle, Eq. 3-4 written out longhand.
    std::vector<double> xp(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            xp[i * d + j] = x.at(i * d + j) + pooled.at(j);
    const auto hs = mm(xp, blk.ws.data(), n, d, 5);
    std::vector<double> a_spatial(n * n), scores(n * n);
    const auto q = mm(x.data(), blk.wq.data(), n, d, d);
    const auto k = mm(x.data(), blk.wk.data(), n, d, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double g = blk.b_spatial.at(0);
            for (std::size_t l = 0; l < 5; ++l)
                g += hs[i * 5 + l] * spatial[(i * n + j) * 5 + l];
            a_spatial[i * n + j] = 1.0 / (1.0 + std::exp(-g));
            double dot = 0;
            for (std::size_t l = 0; l < d; ++l) dot += q[i * d + l] * k[j * d + l];
            scores[i * n + j] = dot / std::sqrt(static_cast<double>(d));
        }
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(n);
        for (std::size_t j = 0; j < n; ++j)
            row[j] = std::log(std::max(a_spatial[i * n + j], 1e-9)) + scores[i * n + j];
        const auto ref = softmax_row_oracle(row);
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(std::abs(out.a_spatial.at(i * n + j) - a_spatial[i * n + j]) < 1e-10);
            CHECK(std::abs(out.a_fused.at(i * n + j) - ref[j]) < 1e-10);
        }
    }
}

TEST_CASE("cross attention: single key, duplication invariance, oracle") {
    ModelConfig cfg;
    cfg.d = 8;
    GroundingNetwork net(cfg, InputMode::Semantic, 13);
    const FusionBlock& blk = net.fusion[0];
    Rng rng(14);
    const std::size_t d = 8;

    // n_t = 1: softmax over one key is exactly 1; output = LN(h + V row).
    Tensor h1 = Tensor::constant({2, d}, random_vec(2 * d, rng));
    Tensor t1 = Tensor::constant({1, d}, random_vec(d, rng));
    Tensor out1 = cross_attention(h1, t1, blk);
    const auto v1 = mm(t1.data(), blk.cv.data(), 1, d, d);
    std::vector<double> pre(2 * d);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < d; ++j) pre[i * d + j] = h1.at(i * d + j) + v1[j];
    const auto ref1 = layer_norm_oracle(pre, blk.ln_cross.gamma.data(),
                                        blk.ln_cross.beta.data(), 2, d);
    for (std::size_t i = 0; i < 2 * d; ++i) CHECK(std::abs(out1.at(i) - ref1[i]) < 1e-10);

    // Duplicating every token leaves the output unchanged.
    const auto txt = random_vec(3 * d, rng);
    std::vector<double> txt2(txt);
    txt2.insert(txt2.end(), txt.begin(), txt.end());
    Tensor ta = Tensor::constant({3, d}, txt);
    Tensor tb = Tensor::constant({6, d}, txt2);
    Tensor oa = cross_attention(h1, ta, blk);
    Tensor ob = cross_attention(h1, tb, blk);
    for (std::size_t i = 0; i < oa.size(); ++i) CHECK(std::abs(oa.at(i) - ob.at(i)) < 1e-12);

    // Straight-line Eq. 5-6 oracle on a 2x3 instance.
    Tensor out = cross_attention(h1, ta, blk);
    const auto q = mm(h1.data(), blk.cq.data(), 2, d, d);
    const auto k = mm(ta.data(), blk.ck.data(), 3, d, d);
    const auto v = mm(ta.data(), blk.cv.data(), 3, d, d);
    std::vector<double> mixed(2 * d, 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> row(3);
        for (std::size_t j = 0; j < 3; ++j) {
            double dot = 0;
            for (std::size_t l = 0; l < d; ++l) dot += q[i * d + l] * k[j * d + l];
            row[j] = dot / std::sqrt(static_cast<double>(d));
        }
        const auto w = softmax_row_oracle(row);
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t l = 0; l < d; ++l) mixed[i * d + l] += w[j] * v[j * d + l];
        for (std::size_t l = 0; l < d; ++l) mixed[i * d + l] += h1.at(i * d + l);
    }
    const auto ref = layer_norm_oracle(mixed, blk.ln_cross.gamma.data(),
                                       blk.ln_cross.beta.data(), 2, d);
    for (std::size_t i = 0; i < 2 * d; ++i) CHECK(std::abs(out.at(i) - ref[i]) < 1e-10);
}

TEST_CASE("network forward contract: per-block records and stochastic attention") {
    ModelConfig one;
    one.blocks = 1;
    GroundingNetwork net1(one, InputMode::Semantic, 15);
    Rng orng(16);
    auto objs = random_objects(4, orng);
    auto state1 = net1.forward(objs, {0, 1, 2});
    CHECK(state1.hidden.size() == 1);
    CHECK(state1.attn.size() == 1);
    CHECK(state1.logits.size() == 1);

    ModelConfig three;
    GroundingNetwork net3(three, InputMode::Semantic, 15);
    auto state3 = net3.forward(objs, {0, 1, 2});
    CHECK(state3.hidden.size() == 3);
    for (const auto& a : state3.attn) {
        const std::size_t n = objs.size();
        for (std::size_t i = 0; i < n; ++i) {
            double row_sum = 0;
            for (std::size_t j = 0; j < n; ++j) row_sum += a.at(i * n + j);
            CHECK(std::abs(row_sum - 1.0) < 1e-9);
        }
    }
    CHECK(state3.logits.back().shape() == std::vector<std::size_t>{4, 1});
}

TEST_CASE("identical seeds and inputs give identical forward states") {
    ModelConfig cfg;
    GroundingNetwork a(cfg, InputMode::Semantic, 4242);
    GroundingNetwork b(cfg, InputMode::Semantic, 4242);
    Rng orng(17);
    auto objs = random_objects(5, orng);
    auto sa = a.forward(objs, {1, 4, 2, 2});
    auto sb = b.forward(objs, {1, 4, 2, 2});
    for (std::size_t s = 0; s < sa.hidden.size(); ++s)
        for (std::size_t i = 0; i < sa.hidden[s].size(); ++i)
            CHECK(sa.hidden[s].at(i) == sb.hidden[s].at(i));
    for (std::size_t i = 0; i < sa.logits.back().size(); ++i)
        CHECK(sa.logits.back().at(i) == sb.logits.back().at(i));
}

TEST_CASE("object-order equivariance of the full forward pass") {
    ModelConfig cfg;
    GroundingNetwork net(cfg, InputMode::Semantic, 18);
    Rng orng(19);
    auto objs = random_objects(5, orng);
    const std::vector<std::size_t> tokens = {2, 7, 1};
    auto base = net.forward(objs, tokens);

    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<ObjectRecord> shuffled;
    for (auto p : perm) shuffled.push_back(objs[p]);
    auto permuted = net.forward(shuffled, tokens);

    const std::size_t n = objs.size(), d = cfg.d;
    for (std::size_t s = 0; s < base.hidden.size(); ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j)
                CHECK(permuted.hidden[s].at(i * d + j) ==
                      doctest::Approx(base.hidden[s].at(perm[i] * d + j)).epsilon(1e-9));
            CHECK(permuted.logits[s].at(i) ==
                  doctest::Approx(base.logits[s].at(perm[i])).epsilon(1e-9));
            for (std::size_t j = 0; j < n; ++j)
                CHECK(permuted.attn[s].at(i * n + j) ==
                      doctest::Approx(base.attn[s].at(perm[i] * n + perm[j])).epsilon(1e-9));
        }
    }
}

TEST_CASE("every parameter tensor receives gradient from a generic pass") {
    for (InputMode mode : {InputMode::Semantic, InputMode::Points}) {
        ModelConfig cfg;
        GroundingNetwork net(cfg, mode, 20);
        Rng orng(21);
        auto objs = random_objects(4, orng, 24);
        auto state = net.forward(objs, {0, 5, 3, 9, 2, 11, 6, 1});
        Tensor total = sum(state.logits[0]);
        for (std::size_t s = 1; s < state.logits.size(); ++s)
            total = add(total, sum(state.logits[s]));
        backward(total);
        for (const auto& [name, t] : net.named_params()) {
            if (mode == InputMode::Semantic && name.rfind("points.", 0) == 0) continue;
            if (mode == InputMode::Points && name.rfind("semantics.", 0) == 0) continue;
            const auto& g = t.grad();
            const bool nonzero =
                std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; });
            CHECK_MESSAGE(nonzero, name, " has all-zero gradient in mode ",
                          input_mode_name(mode));
        }
        net.zero_grad();
    }
}

TEST_CASE("input mode names round-trip") {
    CHECK(input_mode_from_name(input_mode_name(InputMode::Semantic)) == InputMode::Semantic);
    CHECK(input_mode_from_name(input_mode_name(InputMode::Points)) == InputMode::Points);
    CHECK_THROWS_AS(input_mode_from_name("bogus"), DataError);
}
