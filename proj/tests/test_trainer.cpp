#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hcost/trainer.hpp"

using namespace hcost;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Dataset small_dataset(std::size_t scenes, std::uint64_t seed) {
    GenConfig cfg;
    cfg.scenes = scenes;
    return generate_dataset(cfg, seed);
}

std::vector<EpochRecord> run_aux(const Dataset& ds, TrainConfig cfg,
                                 GroundingNetwork* out_net = nullptr) {
    std::vector<EpochRecord> log;
    GroundingNetwork net =
        train_auxiliary(ds, cfg, [&](const EpochRecord& r) { log.push_back(r); });
    if (out_net) *out_net = std::move(net);
    return log;
}

}  // namespace

TEST_CASE("adamw first step matches the hand-evaluated update") {
    Tensor p = Tensor::param({1}, {1.0});
    p.node_->grad = {1.0};
    AdamWConfig cfg;
    cfg.lr = 0.0005;
    cfg.weight_decay = 0.0;
    AdamW opt({{"p", p}}, cfg);
    opt.step();
    // Bias-corrected first step: m_hat = g, v_hat = g^2, so the move is
    // lr * g / (|g| + eps) ~ lr.
    CHECK(p.at(0) == doctest::Approx(0.9995).epsilon(1e-6));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw leaves parameters alone with zero gradient and zero decay") {
    Tensor p = Tensor::param({3}, {1.0, -2.0, 0.5});
    p.node_->grad = {0.0, 0.0, 0.0};
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({{"p", p}}, cfg);
    opt.step();
    opt.step();
    CHECK(p.at(0) == 1.0);
    CHECK(p.at(1) == -2.0);
    CHECK(p.at(2) == 0.5);
}

TEST_CASE("decoupled weight decay shrinks parameters even with zero gradient") {
    Tensor p = Tensor::param({2}, {1.0, -2.0});
    p.node_->grad = {0.0, 0.0};
    AdamWConfig cfg;
    cfg.weight_decay = 0.01;
    AdamW opt({{"p", p}}, cfg);
    opt.step();
    CHECK(std::abs(p.at(0)) < 1.0);
    CHECK(std::abs(p.at(1)) < 2.0);
    CHECK(p.at(0) == doctest::Approx(1.0 * (1 - cfg.lr * cfg.weight_decay)));
}

TEST_CASE("zero learning rate freezes parameters entirely") {
    Tensor p = Tensor::param({1}, {1.0});
    p.node_->grad = {2.5};
    AdamWConfig cfg;
    cfg.lr = 0.0;
    AdamW opt({{"p", p}}, cfg);
    opt.step();
    opt.step();
    CHECK(p.at(0) == 1.0);
}

TEST_CASE("clip_global_grad_norm rescales to the ceiling") {
    Tensor a = Tensor::param({2}, {0, 0});
    Tensor b = Tensor::param({1}, {0});
    a.node_->grad = {3.0, 4.0};
    b.node_->grad = {12.0};  // global norm 13
    NamedParams params = {{"a", a}, {"b", b}};
    clip_global_grad_norm(params, 5.0);
    double norm = 0;
    for (const auto& [_, t] : params)
        for (double g : t.grad()) norm += g * g;
    CHECK(std::sqrt(norm) == doctest::Approx(5.0));
    // Already-small gradients are untouched.
    a.node_->grad = {0.3, 0.4};
    b.node_->grad = {0.0};
    clip_global_grad_norm(params, 5.0);
    CHECK(a.grad()[0] == 0.3);
}

TEST_CASE("auxiliary training reduces the loss over two epochs") {
    Dataset ds = small_dataset(200, 31);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 1;
    auto log = run_aux(ds, cfg);
    REQUIRE(log.size() == 2);
    CHECK(log[1].loss_total < log[0].loss_total);
    CHECK(log[0].epoch == 1);
    CHECK(log[1].epoch == 2);
}

TEST_CASE("same seed gives byte-identical checkpoints") {
    Dataset ds = small_dataset(40, 32);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 5;
    GroundingNetwork n1, n2;
    run_aux(ds, cfg, &n1);
    run_aux(ds, cfg, &n2);
    CheckpointMeta meta;
    meta.loss = cfg.loss;
    save_checkpoint("/tmp/hcost_ck_a.json", n1, meta);
    save_checkpoint("/tmp/hcost_ck_b.json", n2, meta);
    CHECK(slurp("/tmp/hcost_ck_a.json") == slurp("/tmp/hcost_ck_b.json"));
}

TEST_CASE("lr = 0 leaves parameters at initialization") {
    Dataset ds = small_dataset(20, 33);
    TrainConfig cfg;
    cfg.seed = 9;
    cfg.lr = 0.0;
    cfg.epochs = 1;
    GroundingNetwork one, three;
    run_aux(ds, cfg, &one);
    cfg.epochs = 3;
    run_aux(ds, cfg, &three);
    const auto pa = one.named_params();
    const auto pb = three.named_params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second.data() == pb[i].second.data());
    }
}

TEST_CASE("checkpoint save/load round-trip is byte-identical") {
    Dataset ds = small_dataset(20, 34);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 3;
    GroundingNetwork net;
    run_aux(ds, cfg, &net);
    CheckpointMeta meta;
    meta.model = cfg.model;
    meta.loss = cfg.loss;
    meta.epoch = 1;
    meta.seed = 3;
    meta.dataset_fingerprint = 42;
    save_checkpoint("/tmp/hcost_ck_rt1.json", net, meta);
    CheckpointMeta back;
    GroundingNetwork loaded = load_checkpoint("/tmp/hcost_ck_rt1.json", &back);
    save_checkpoint("/tmp/hcost_ck_rt2.json", loaded, back);
    CHECK(slurp("/tmp/hcost_ck_rt1.json") == slurp("/tmp/hcost_ck_rt2.json"));
    CHECK(back.epoch == 1);
    CHECK(back.seed == 3);
    CHECK(back.dataset_fingerprint == 42);
    CHECK(back.mode == net.mode());
}

TEST_CASE("phase 2 freezes the teacher and logs every component") {
    Dataset ds = small_dataset(30, 35);
    TrainConfig aux_cfg;
    aux_cfg.epochs = 2;
    aux_cfg.seed = 11;
    GroundingNetwork teacher;
    run_aux(ds, aux_cfg, &teacher);
    const auto before = teacher.named_params();
    std::vector<std::vector<double>> frozen;
    for (const auto& [_, t] : before) frozen.push_back(t.data());

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 12;
    cfg.loss.alpha = 0.2;
    cfg.loss.beta = 0.1;
    std::vector<EpochRecord> log;
    GroundingNetwork student =
        train_inference(ds, teacher, cfg, [&](const EpochRecord& r) { log.push_back(r); });
    CHECK(student.mode() == InputMode::Points);

    const auto after = teacher.named_params();
    for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].second.data() == frozen[i]);

    REQUIRE(log.size() == 2);
    for (const auto& r : log) {
        CHECK(r.loss_align_attn > 0.0);
        CHECK(r.loss_align_hidden > 0.0);
        CHECK(r.loss_distinct >= 0.0);
        // Component accounting: total = ground + hier + alpha*distinct + alignments.
        const double reconstructed = r.loss_ground + r.loss_hier +
                                     cfg.loss.alpha * r.loss_distinct +
                                     r.loss_align_attn + r.loss_align_hidden;
        CHECK(std::abs(r.loss_total - reconstructed) < 1e-9);
    }
}

TEST_CASE("alpha = beta = 0 reduces phase 2 to the grounding loss") {
    Dataset ds = small_dataset(30, 36);
    TrainConfig aux_cfg;
    aux_cfg.epochs = 1;
    aux_cfg.seed = 13;
    GroundingNetwork teacher;
    run_aux(ds, aux_cfg, &teacher);

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 14;
    cfg.loss.alpha = 0.0;
    cfg.loss.beta = 0.0;
    std::vector<EpochRecord> log;
    train_inference(ds, teacher, cfg, [&](const EpochRecord& r) { log.push_back(r); });
    for (const auto& r : log) {
        CHECK(r.loss_hier == 0.0);
        CHECK(std::abs(r.loss_total - r.loss_ground) < 1e-12);
    }
}

TEST_CASE("epoch records serialize with the documented fields") {
    EpochRecord r;
    r.epoch = 3;
    r.loss_total = 1.5;
    r.loss_ground = 1.0;
    r.loss_hier = 0.5;
    r.wall_time = 0.25;
    const std::string j = epoch_record_to_json(r);
    for (const char* key : {"\"epoch\":", "\"loss_total\":", "\"loss_ground\":",
                            "\"loss_hier\":", "\"loss_align_A\":", "\"loss_align_H\":",
                            "\"loss_distinct\":", "\"wall_time\":"})
        CHECK(j.find(key) != std::string::npos);
}

TEST_CASE("train config validation errors") {
    Dataset ds = small_dataset(5, 37);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.loss.deltas = {0.5, 1.0, 0.0};  // not decreasing
    CHECK_THROWS_AS(cfg.loss.validate(), ConfigError);

    // Teacher/student architecture mismatch is rejected.
    GroundingNetwork teacher(ModelConfig{}, InputMode::Semantic, 1);
    TrainConfig other;
    other.epochs = 1;
    other.model.blocks = 2;
    other.loss.deltas = {0.5, 0.0};
    CHECK_THROWS_AS(train_inference(ds, teacher, other), ConfigError);

    // A points-mode "teacher" is rejected.
    GroundingNetwork impostor(ModelConfig{}, InputMode::Points, 1);
    CHECK_THROWS_AS(train_inference(ds, impostor, TrainConfig{.epochs = 1}), ConfigError);
}
