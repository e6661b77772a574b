#include "hcost/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "hcost/losses.hpp"
#include "hcost/model.hpp"
#include "hcost/rng.hpp"
#include "hcost/tensor.hpp"

namespace hcost {

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::constant(std::move(shape), std::move(v));
}

using CheckFn = std::function<double(Rng&)>;

GradCheckEntry run_entry(const std::string& name, int points, std::uint64_t seed,
                         const CheckFn& one_point, double tol = 1e-4) {
    Rng rng(seed);
    GradCheckEntry e;
    e.name = name;
    e.tol = tol;
    for (int i = 0; i < points; ++i) e.max_rel_err = std::max(e.max_rel_err, one_point(rng));
    e.pass = e.max_rel_err < tol;
    return e;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed, int points_per_op) {
    std::vector<GradCheckEntry> out;
    std::uint64_t salt = 0;
    auto check = [&](const std::string& name, const CheckFn& fn, int points = -1,
                     double tol = 1e-4) {
        out.push_back(run_entry(name, points < 0 ? points_per_op : points,
                                derive_seed(seed, ++salt), fn, tol));
    };

    // -- primitives ----------------------------------------------------------
    check("matmul", [](Rng& rng) {
        Tensor b = random_tensor({4, 2}, rng);
        return grad_check([&](const Tensor& x) { return sum(matmul(x, b)); },
                          random_tensor({3, 4}, rng));
    });
    check("matmul_nt", [](Rng& rng) {
        Tensor b = random_tensor({2, 4}, rng);
        return grad_check([&](const Tensor& x) { return sum(matmul_nt(x, b)); },
                          random_tensor({3, 4}, rng));
    });
    check("add", [](Rng& rng) {
        Tensor b = random_tensor({3, 3}, rng);
        return grad_check([&](const Tensor& x) { return sum(mul(add(x, b), add(x, b))); },
                          random_tensor({3, 3}, rng));
    });
    check("sub", [](Rng& rng) {
        Tensor b = random_tensor({3, 3}, rng);
        return grad_check([&](const Tensor& x) { return sum(mul(sub(x, b), sub(x, b))); },
                          random_tensor({3, 3}, rng));
    });
    check("mul", [](Rng& rng) {
        Tensor b = random_tensor({2, 5}, rng);
        return grad_check([&](const Tensor& x) { return sum(mul(x, b)); },
                          random_tensor({2, 5}, rng));
    });
    check("scale", [](Rng& rng) {
        const double c = rng.uniform(-2.0, 2.0);
        return grad_check([&](const Tensor& x) { return sum(scale(x, c)); },
                          random_tensor({4}, rng));
    });
    check("add_scalar", [](Rng& rng) {
        return grad_check([&](const Tensor& x) { return sum(mul(add_scalar(x, 0.7), x)); },
                          random_tensor({4}, rng));
    });
    check("add_row", [](Rng& rng) {
        Tensor r = random_tensor({3}, rng);
        return grad_check(
            [&](const Tensor& x) { return sum(mul(add_row(x, r), add_row(x, r))); },
            random_tensor({2, 3}, rng));
    });
    check("add_row.vec", [](Rng& rng) {
        Tensor a = random_tensor({2, 3}, rng);
        return grad_check(
            [&](const Tensor& r) { return sum(mul(add_row(a, r), add_row(a, r))); },
            random_tensor({3}, rng));
    });
    check("add_broadcast_scalar", [](Rng& rng) {
        Tensor a = random_tensor({3, 3}, rng);
        return grad_check(
            [&](const Tensor& s) { return sum(sigmoid(add_broadcast_scalar(a, s))); },
            random_tensor({1}, rng));
    });
    check("sigmoid", [](Rng& rng) {
        return grad_check([&](const Tensor& x) { return sum(sigmoid(x)); },
                          random_tensor({5}, rng, -3.0, 3.0));
    });
    check("relu", [](Rng& rng) {
        // keep coordinates away from the kink at 0
        Tensor x0 = random_tensor({6}, rng);
        for (auto& v : x0.data())
            if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
        return grad_check([&](const Tensor& x) { return sum(mul(relu(x), x)); }, x0);
    });
    check("exp", [](Rng& rng) {
        return grad_check([&](const Tensor& x) { return sum(exp_op(x)); },
                          random_tensor({5}, rng, -1.0, 1.0));
    });
    check("log_clamped", [](Rng& rng) {
        return grad_check([&](const Tensor& x) { return sum(log_clamped(x)); },
                          random_tensor({5}, rng, 0.2, 2.0));
    });
    check("softmax_rows", [](Rng& rng) {
        Tensor w = random_tensor({3, 4}, rng);
        return grad_check(
            [&](const Tensor& x) { return sum(mul(softmax_rows(x), w)); },
            random_tensor({3, 4}, rng, -2.0, 2.0));
    });
    check("sum", [](Rng& rng) {
        return grad_check([&](const Tensor& x) { return sum(x); },
                          random_tensor({7}, rng), 1e-5);
    });
    check("mean", [](Rng& rng) {
        return grad_check([&](const Tensor& x) { return mean(mul(x, x)); },
                          random_tensor({6}, rng));
    });
    check("masked_mean", [](Rng& rng) {
        std::vector<double> mask = {1, 0, 1, 1, 0};
        return grad_check([&](const Tensor& x) { return masked_mean(mul(x, x), mask); },
                          random_tensor({5}, rng));
    });
    check("norm2", [](Rng& rng) {
        Tensor x0 = random_tensor({5}, rng, 0.5, 1.5);
        return grad_check([&](const Tensor& x) { return norm2(x); }, x0);
    });
    check("layer_norm_rows.x", [](Rng& rng) {
        Tensor g = random_tensor({4}, rng, 0.5, 1.5);
        Tensor b = random_tensor({4}, rng);
        Tensor w = random_tensor({3, 4}, rng);
        return grad_check(
            [&](const Tensor& x) { return sum(mul(layer_norm_rows(x, g, b), w)); },
            random_tensor({3, 4}, rng));
    });
    check("layer_norm_rows.gamma", [](Rng& rng) {
        Tensor x = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({4}, rng);
        Tensor w = random_tensor({3, 4}, rng);
        return grad_check(
            [&](const Tensor& g) { return sum(mul(layer_norm_rows(x, g, b), w)); },
            random_tensor({4}, rng, 0.5, 1.5));
    });
    check("layer_norm_rows.beta", [](Rng& rng) {
        Tensor x = random_tensor({3, 4}, rng);
        Tensor g = random_tensor({4}, rng, 0.5, 1.5);
        Tensor w = random_tensor({3, 4}, rng);
        return grad_check(
            [&](const Tensor& bt) { return sum(mul(layer_norm_rows(x, g, bt), w)); },
            random_tensor({4}, rng));
    });
    check("concat_rows", [](Rng& rng) {
        Tensor b = random_tensor({1, 4}, rng);
        return grad_check(
            [&](const Tensor& x) {
                Tensor stacked = concat_rows({x, b, x});
                return sum(mul(stacked, stacked));
            },
            random_tensor({1, 4}, rng));
    });
    check("maxpool_rows", [](Rng& rng) {
        Tensor w = random_tensor({1, 4}, rng);
        return grad_check(
            [&](const Tensor& x) { return sum(mul(maxpool_rows(x), w)); },
            random_tensor({5, 4}, rng));
    });
    check("row", [](Rng& rng) {
        return grad_check([&](const Tensor& x) { return sum(mul(row(x, 1), row(x, 1))); },
                          random_tensor({3, 4}, rng));
    });
    check("gather_rows", [](Rng& rng) {
        std::vector<std::size_t> ids = {2, 0, 2};
        return grad_check(
            [&](const Tensor& x) {
                Tensor g = gather_rows(x, ids);
                return sum(mul(g, g));
            },
            random_tensor({4, 3}, rng));
    });
    check("pairwise_dot", [](Rng& rng) {
        const std::size_t n = 3, k = 5;
        std::vector<double> p(n * n * k);
        for (auto& v : p) v = rng.uniform(-1.0, 1.0);
        return grad_check(
            [&](const Tensor& h) { return sum(sigmoid(pairwise_dot(h, p, n))); },
            random_tensor({n, k}, rng));
    });
    check("bce_with_logits", [](Rng& rng) {
        std::vector<double> y = {1, 0, 1, 0};
        std::vector<double> mask = {1, 1, 0, 1};
        return grad_check([&](const Tensor& z) { return bce_with_logits(z, y, mask); },
                          random_tensor({4}, rng, -3.0, 3.0));
    });
    check("distinct_hinge", [](Rng& rng) {
        Tensor b = random_tensor({3, 4}, rng);
        const double m = 2.0;
        return grad_check(
            [&](const Tensor& a) { return distinct_hinge(a, b, m); },
            random_tensor({3, 4}, rng));
    });

    // -- losses --------------------------------------------------------------
    check("loss.hierarchical", [](Rng& rng) {
        StageTargets targets;
        targets.stages = {{1, 1, 0, 0}, {1, 0, 0, 0}};
        std::vector<double> mask = {1, 1, 1, 1};
        return grad_check(
            [&](const Tensor& z) {
                return hierarchical_loss({row(z, 0), row(z, 1)}, targets, mask, 0.3);
            },
            random_tensor({2, 4}, rng, -2.0, 2.0));
    });
    check("loss.pairwise_contrastive.similar", [](Rng& rng) {
        Tensor f2 = random_tensor({4}, rng);
        return grad_check(
            [&](const Tensor& f1) { return pairwise_contrastive(f1, f2, 1, 1.0); },
            random_tensor({4}, rng));
    });
    check("loss.pairwise_contrastive.dissimilar", [](Rng& rng) {
        Tensor f2 = random_tensor({4}, rng, -0.2, 0.2);
        return grad_check(
            [&](const Tensor& f1) { return pairwise_contrastive(f1, f2, 0, 4.0); },
            random_tensor({4}, rng, -0.2, 0.2));
    });
    check("loss.alignment_attn", [](Rng& rng) {
        Tensor t1 = random_tensor({3, 3}, rng);
        Tensor t2 = random_tensor({3, 3}, rng);
        return grad_check(
            [&](const Tensor& a) {
                return alignment_loss_attn({a, scale(a, 2.0)}, {t1, t2});
            },
            random_tensor({3, 3}, rng));
    });
    check("loss.alignment_hidden", [](Rng& rng) {
        Tensor t1 = random_tensor({3, 5}, rng);
        return grad_check(
            [&](const Tensor& h) { return alignment_loss_hidden({h}, {t1}); },
            random_tensor({3, 5}, rng));
    });
    check("loss.distinctiveness", [](Rng& rng) {
        Tensor b = random_tensor({4, 5}, rng);
        return grad_check(
            [&](const Tensor& h) { return distinctiveness_loss(h, b, 3.0); },
            random_tensor({4, 5}, rng));
    });
    check("loss.siamese_contrastive", [](Rng& rng) {
        Tensor b = random_tensor({3, 4}, rng);
        Tensor t = random_tensor({3, 4}, rng);
        return grad_check(
            [&](const Tensor& h) {
                Tensor a_attn = alignment_loss_attn({h}, {t});
                Tensor a_hidden = alignment_loss_hidden({h}, {b});
                Tensor dist = distinctiveness_loss(h, b, 2.0);
                return siamese_contrastive(a_attn, a_hidden, dist, 0.2);
            },
            random_tensor({3, 4}, rng));
    });
    check("loss.grounding", [](Rng& rng) {
        std::vector<double> y = {1, 0, 0};
        std::vector<double> mask = {1, 1, 1};
        return grad_check([&](const Tensor& z) { return grounding_loss(z, y, mask); },
                          random_tensor({3}, rng, -2.0, 2.0));
    });

    // -- model compositions --------------------------------------------------
    ModelConfig small;
    small.d = 16;
    small.blocks = 3;
    small.ffn_mult = 4;

    check("model.spatial_attention", [small](Rng& rng) {
        GroundingNetwork net(small, InputMode::Semantic, 12345);
        const std::size_t n = 3;
        std::vector<std::array<double, 3>> centroids;
        for (std::size_t i = 0; i < n; ++i)
            centroids.push_back({rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0),
                                 rng.uniform(0.0, 2.0)});
        auto spatial = compute_pairwise_spatial(centroids);
        Tensor txt = random_tensor({1, small.d}, rng);
        return grad_check(
            [&](const Tensor& x) {
                auto sa = spatial_attention(x, txt, spatial, n, net.fusion[0]);
                return sum(sa.hidden);
            },
            random_tensor({n, small.d}, rng));
    }, 10);
    check("model.cross_attention", [small](Rng& rng) {
        GroundingNetwork net(small, InputMode::Semantic, 777);
        Tensor f_txt = random_tensor({4, small.d}, rng);
        return grad_check(
            [&](const Tensor& h) {
                return sum(cross_attention(h, f_txt, net.fusion[0]));
            },
            random_tensor({3, small.d}, rng));
    }, 10);
    check("model.phase2_objective", [small](Rng& rng) {
        // Full phase-2 loss on a 3-object scene, varied in the student's
        // initial object embedding.
        GroundingNetwork student(small, InputMode::Points, 31);
        GroundingNetwork teacher(small, InputMode::Semantic, 32);
        const std::size_t n = 3;
        std::vector<ObjectRecord> objects;
        for (std::size_t i = 0; i < n; ++i) {
            ObjectRecord o;
            o.id = static_cast<int>(i);
            o.class_id = static_cast<int>(i % 12);
            o.attribute_id = static_cast<int>(i % 4);
            o.centroid = {rng.uniform(0.5, 7.5), rng.uniform(0.5, 7.5), rng.uniform(0.3, 2.5)};
            o.size = {0.6, 0.6, 0.6};
            objects.push_back(o);
        }
        std::vector<std::array<double, 3>> centroids;
        for (const auto& o : objects) centroids.push_back(o.centroid);
        std::vector<std::size_t> tokens = {0, 10};
        Tensor f_txt_student = student.text.encode(tokens).detach();
        Tensor f_txt_teacher = teacher.text.encode(tokens).detach();
        Tensor x_aux = teacher.semantics.encode(objects).detach();
        FusionState aux = teacher.forward_embedded(x_aux, f_txt_teacher, centroids);
        std::vector<Tensor> h_aux, a_aux;
        for (const auto& t : aux.hidden) h_aux.push_back(t.detach());
        for (const auto& t : aux.attn) a_aux.push_back(t.detach());

        LossConfig loss;
        loss.alpha = 0.2;
        loss.beta = 0.1;
        loss.deltas = {1.0, 0.5, 0.0};
        std::vector<int> target_ids = {0, 2};
        const auto stage_targets = hierarchical_targets(objects, target_ids, loss.deltas);
        const auto indicator = target_indicator(objects, target_ids);
        const std::vector<double> mask(n, 1.0);

        return grad_check(
            [&](const Tensor& x0) {
                FusionState st = student.forward_embedded(x0, f_txt_student, centroids);
                Tensor total = add(grounding_loss(st.logits.back(), indicator, mask),
                                   hierarchical_loss(st.logits, stage_targets, mask,
                                                     loss.beta));
                Tensor l_attn = alignment_loss_attn(st.attn, a_aux);
                Tensor l_hidden = alignment_loss_hidden(st.hidden, h_aux);
                Tensor l_dist =
                    distinctiveness_loss(st.hidden.back(), h_aux.back(), loss.margin);
                return add(total,
                           siamese_contrastive(l_attn, l_hidden, l_dist, loss.alpha));
            },
            random_tensor({n, small.d}, rng));
    }, 3);

    return out;
}

bool gradcheck_all_passed(const std::vector<GradCheckEntry>& entries) {
    for (const auto& e : entries)
        if (!e.pass) return false;
    return !entries.empty();
}

std::string gradcheck_report(const std::vector<GradCheckEntry>& entries) {
    std::ostringstream os;
    for (const auto& e : entries) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3e", e.max_rel_err);
        os << (e.pass ? "PASS" : "FAIL") << "  " << e.name << "  max_rel_err=" << buf
           << "  tol=" << e.tol << "\n";
    }
    return os.str();
}

}  // namespace hcost
