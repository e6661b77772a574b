#include "hcost/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace hcost {

using ordered_json = nlohmann::ordered_json;

// ---- optimizer -------------------------------------------------------------

AdamW::AdamW(NamedParams params, AdamWConfig cfg) : cfg_(cfg) {
    for (auto& [name, t] : params) {
        Slot slot;
        slot.param = t;
        slot.m.assign(t.size(), 0.0);
        slot.v.assign(t.size(), 0.0);
        slots_.push_back(std::move(slot));
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& slot : slots_) {
        auto& data = slot.param.data();
        const auto& grad = slot.param.node_->grad;
        if (grad.size() != data.size())
            throw TensorError("adamw_step: gradient missing or shape mismatch");
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] *= 1.0 - cfg_.lr * cfg_.weight_decay;
            slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * grad[i];
            slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void clip_global_grad_norm(const NamedParams& params, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, t] : params)
        for (double g : t.node_->grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (const auto& [name, t] : params)
        for (double& g : t.node_->grad) g *= s;
}

// ---- training --------------------------------------------------------------

namespace {

struct SampleRef {
    std::size_t scene, query;
};

std::vector<SampleRef> all_samples(const Dataset& ds) {
    std::vector<SampleRef> out;
    for (std::size_t s = 0; s < ds.scenes.size(); ++s)
        for (std::size_t q = 0; q < ds.scenes[s].queries.size(); ++q)
            out.push_back({s, q});
    if (out.empty()) throw DataError("train: dataset has no queries");
    return out;
}

std::vector<Tensor> detach_all(const std::vector<Tensor>& ts) {
    std::vector<Tensor> out;
    out.reserve(ts.size());
    for (const auto& t : ts) out.push_back(t.detach());
    return out;
}

struct SampleLosses {
    Tensor total;
    double ground = 0, hier = 0, align_attn = 0, align_hidden = 0, distinct = 0;
};

SampleLosses sample_loss(const GroundingNetwork& net, const GroundingNetwork* teacher,
                         const Scene& scene, const Query& query, const LossConfig& loss) {
    const std::vector<double> mask(scene.objects.size(), 1.0);
    const auto stage_targets =
        hierarchical_targets(scene.objects, query.target_ids, loss.deltas);
    const auto indicator = target_indicator(scene.objects, query.target_ids);

    const FusionState state = net.forward(scene.objects, query.tokens);
    SampleLosses out;
    Tensor l_ground = grounding_loss(state.logits.back(), indicator, mask);
    Tensor l_hier = hierarchical_loss(state.logits, stage_targets, mask, loss.beta);
    out.ground = l_ground.value();
    out.hier = l_hier.value();
    out.total = add(l_ground, l_hier);

    if (teacher) {
        const FusionState aux = teacher->forward(scene.objects, query.tokens);
        const auto h_aux = detach_all(aux.hidden);
        const auto a_aux = detach_all(aux.attn);
        Tensor l_attn = alignment_loss_attn(state.attn, a_aux);
        Tensor l_hidden = alignment_loss_hidden(state.hidden, h_aux);
        Tensor l_distinct =
            distinctiveness_loss(state.hidden.back(), h_aux.back(), loss.margin);
        out.align_attn = l_attn.value();
        out.align_hidden = l_hidden.value();
        out.distinct = l_distinct.value();
        if (loss.alpha > 0.0)
            out.total =
                add(out.total, siamese_contrastive(l_attn, l_hidden, l_distinct, loss.alpha));
    }
    return out;
}

GroundingNetwork train_network(const Dataset& ds, const GroundingNetwork* teacher,
                               InputMode mode, const TrainConfig& cfg,
                               const EpochCallback& on_epoch) {
    cfg.loss.validate();
    ModelConfig model_cfg = cfg.model;
    if (cfg.loss.deltas.size() != model_cfg.blocks)
        throw ConfigError("train: deltas length must equal the fusion depth");
    GroundingNetwork net(model_cfg, mode, derive_seed(cfg.seed, 0x6d6f64656cULL));
    const NamedParams params = net.named_params();
    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW opt(params, opt_cfg);

    auto samples = all_samples(ds);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng(derive_seed(cfg.seed, 0x65706f6368ULL + epoch));
        shuffle_rng.shuffle(samples);

        EpochRecord rec;
        rec.epoch = epoch + 1;
        std::size_t batch_start = 0;
        while (batch_start < samples.size()) {
            const std::size_t batch_end =
                std::min(batch_start + cfg.batch_size, samples.size());
            const double inv_batch = 1.0 / static_cast<double>(batch_end - batch_start);
            net.zero_grad();
            for (std::size_t i = batch_start; i < batch_end; ++i) {
                const Scene& scene = ds.scenes[samples[i].scene];
                const Query& query = scene.queries[samples[i].query];
                SampleLosses losses = sample_loss(net, teacher, scene, query, cfg.loss);
                const double total = losses.total.value();
                if (!std::isfinite(total))
                    throw NumericError("train: non-finite loss at epoch " +
                                       std::to_string(epoch + 1));
                backward(scale(losses.total, inv_batch));
                rec.loss_total += total;
                rec.loss_ground += losses.ground;
                rec.loss_hier += losses.hier;
                rec.loss_align_attn += losses.align_attn;
                rec.loss_align_hidden += losses.align_hidden;
                rec.loss_distinct += losses.distinct;
            }
            clip_global_grad_norm(params, cfg.grad_clip);
            opt.step();
            batch_start = batch_end;
        }
        const double inv_n = 1.0 / static_cast<double>(samples.size());
        rec.loss_total *= inv_n;
        rec.loss_ground *= inv_n;
        rec.loss_hier *= inv_n;
        rec.loss_align_attn *= inv_n;
        rec.loss_align_hidden *= inv_n;
        rec.loss_distinct *= inv_n;
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (on_epoch) on_epoch(rec);
    }
    return net;
}

}  // namespace

GroundingNetwork train_auxiliary(const Dataset& ds, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch) {
    return train_network(ds, nullptr, InputMode::Semantic, cfg, on_epoch);
}

GroundingNetwork train_inference(const Dataset& ds, const GroundingNetwork& teacher,
                                 const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (teacher.mode() != InputMode::Semantic)
        throw ConfigError("train_inference: auxiliary checkpoint has the wrong input mode");
    if (teacher.config() != cfg.model)
        throw ConfigError("train_inference: auxiliary architecture does not match config");
    return train_network(ds, &teacher, InputMode::Points, cfg, on_epoch);
}

std::string epoch_record_to_json(const EpochRecord& r) {
    ordered_json j;
    j["epoch"] = r.epoch;
    j["loss_total"] = r.loss_total;
    j["loss_ground"] = r.loss_ground;
    j["loss_hier"] = r.loss_hier;
    j["loss_align_A"] = r.loss_align_attn;
    j["loss_align_H"] = r.loss_align_hidden;
    j["loss_distinct"] = r.loss_distinct;
    j["wall_time"] = r.wall_time;
    return j.dump();
}

// ---- checkpoints -----------------------------------------------------------

namespace {

ordered_json model_config_to_json(const ModelConfig& m) {
    ordered_json j;
    j["d"] = m.d;
    j["blocks"] = m.blocks;
    j["ffn_mult"] = m.ffn_mult;
    j["max_tokens"] = m.max_tokens;
    j["vocab"] = m.vocab;
    j["n_classes"] = m.n_classes;
    j["n_attributes"] = m.n_attributes;
    j["spatial_dim"] = m.spatial_dim;
    return j;
}

ModelConfig model_config_from_json(const ordered_json& j) {
    ModelConfig m;
    m.d = j.at("d").get<std::size_t>();
    m.blocks = j.at("blocks").get<std::size_t>();
    m.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    m.max_tokens = j.at("max_tokens").get<std::size_t>();
    m.vocab = j.at("vocab").get<std::size_t>();
    m.n_classes = j.at("n_classes").get<std::size_t>();
    m.n_attributes = j.at("n_attributes").get<std::size_t>();
    m.spatial_dim = j.at("spatial_dim").get<std::size_t>();
    return m;
}

ordered_json loss_config_to_json(const LossConfig& l) {
    ordered_json j;
    j["alpha"] = l.alpha;
    j["beta"] = l.beta;
    j["margin"] = l.margin;
    j["deltas"] = l.deltas;
    j["predict_threshold"] = l.predict_threshold;
    return j;
}

LossConfig loss_config_from_json(const ordered_json& j) {
    LossConfig l;
    l.alpha = j.at("alpha").get<double>();
    l.beta = j.at("beta").get<double>();
    l.margin = j.at("margin").get<double>();
    l.deltas = j.at("deltas").get<std::vector<double>>();
    l.predict_threshold = j.at("predict_threshold").get<double>();
    return l;
}

}  // namespace

void save_checkpoint(const std::string& path, const GroundingNetwork& net,
                     const CheckpointMeta& meta) {
    ordered_json j;
    j["format"] = "hcost-checkpoint-v1";
    j["mode"] = input_mode_name(net.mode());
    j["model"] = model_config_to_json(meta.model);
    j["loss"] = loss_config_to_json(meta.loss);
    j["epoch"] = meta.epoch;
    j["seed"] = meta.seed;
    j["dataset_fingerprint"] = meta.dataset_fingerprint;
    ordered_json tensors = ordered_json::object();
    auto params = net.named_params();
    std::sort(params.begin(), params.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [name, t] : params) {
        ordered_json tj;
        tj["shape"] = t.shape();
        tj["data"] = t.data();
        tensors[name] = std::move(tj);
    }
    j["tensors"] = std::move(tensors);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out << j.dump() << "\n";
    if (!out) throw DataError("checkpoint write failed: " + path);
}

GroundingNetwork load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad checkpoint: ") + e.what());
    }
    if (j.value("format", "") != "hcost-checkpoint-v1")
        throw DataError("unrecognized checkpoint format in " + path);
    CheckpointMeta meta;
    meta.model = model_config_from_json(j.at("model"));
    meta.mode = input_mode_from_name(j.at("mode").get<std::string>());
    meta.loss = loss_config_from_json(j.at("loss"));
    meta.epoch = j.at("epoch").get<std::size_t>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.dataset_fingerprint = j.at("dataset_fingerprint").get<std::uint64_t>();

    GroundingNetwork net(meta.model, meta.mode, 0);
    const auto& tensors = j.at("tensors");
    for (auto& [name, t] : net.named_params()) {
        if (!tensors.contains(name))
            throw DataError("checkpoint missing tensor: " + name);
        const auto& tj = tensors.at(name);
        const auto shape = tj.at("shape").get<std::vector<std::size_t>>();
        auto data = tj.at("data").get<std::vector<double>>();
        if (shape != t.shape() || data.size() != t.size())
            throw DataError("checkpoint tensor shape mismatch: " + name);
        const_cast<Tensor&>(t).data() = std::move(data);
    }
    if (meta_out) *meta_out = meta;
    return net;
}

}  // namespace hcost
