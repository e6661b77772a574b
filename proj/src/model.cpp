#include "hcost/model.hpp"

#include <cmath>

namespace hcost {

namespace {

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    return Tensor::param({fan_in, fan_out}, std::move(w));
}

Tensor init_bias(std::size_t n) {
    return Tensor::param({n}, std::vector<double>(n, 0.0));
}

Tensor init_embedding(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> w(rows * cols);
    for (auto& v : w) v = rng.gaussian() * 0.02;
    return Tensor::param({rows, cols}, std::move(w));
}

LayerNormParams init_ln(std::size_t n) {
    return {Tensor::param({n}, std::vector<double>(n, 1.0)),
            Tensor::param({n}, std::vector<double>(n, 0.0))};
}

void collect_ln(NamedParams& out, const std::string& prefix, const LayerNormParams& ln) {
    out.emplace_back(prefix + ".gamma", ln.gamma);
    out.emplace_back(prefix + ".beta", ln.beta);
}

Tensor mean_rows(const Tensor& x) {
    const std::size_t m = x.shape()[0];
    return matmul(Tensor::constant({1, m}, std::vector<double>(m, 1.0 / static_cast<double>(m))),
                  x);
}

}  // namespace

std::vector<double> compute_pairwise_spatial(
    const std::vector<std::array<double, 3>>& centroids) {
    const std::size_t n = centroids.size();
    std::vector<double> p(n * n * 5, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double* pij = p.data() + (i * n + j) * 5;
            const double dx = centroids[j][0] - centroids[i][0];
            const double dy = centroids[j][1] - centroids[i][1];
            const double dz = centroids[j][2] - centroids[i][2];
            const double horiz = std::sqrt(dx * dx + dy * dy);
            const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
            if (i == j || dist == 0.0) {
                pij[0] = 0.0;
                pij[1] = 0.0;
                pij[2] = 1.0;
                pij[3] = 0.0;
                pij[4] = 1.0;
                continue;
            }
            const double th_h = std::atan2(dy, dx);
            const double th_v = std::atan2(dz, horiz);
            pij[0] = dist;
            pij[1] = std::sin(th_h);
            pij[2] = std::cos(th_h);
            pij[3] = std::sin(th_v);
            pij[4] = std::cos(th_v);
        }
    }
    return p;
}

SpatialAttnOut spatial_attention(const Tensor& x, const Tensor& txt_pooled,
                                 const std::vector<double>& spatial, std::size_t n_obj,
                                 const FusionBlock& block) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.shape()[1]));
    Tensor q = matmul(x, block.wq);
    Tensor k = matmul(x, block.wk);
    Tensor v = matmul(x, block.wv);
    Tensor scores = scale(matmul_nt(q, k), inv_sqrt_d);

    Tensor hs = matmul(add_row(x, txt_pooled), block.ws);
    Tensor gate_logits =
        add_broadcast_scalar(pairwise_dot(hs, spatial, n_obj), block.b_spatial);
    Tensor a_spatial = sigmoid(gate_logits);

    Tensor a_fused = softmax_rows(add(log_clamped(a_spatial), scores));
    Tensor mixed = matmul(matmul(a_fused, v), block.wo);
    Tensor hidden =
        layer_norm_rows(add(x, mixed), block.ln_attn.gamma, block.ln_attn.beta);
    return {a_spatial, a_fused, hidden};
}

Tensor cross_attention(const Tensor& h, const Tensor& f_txt, const FusionBlock& block) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h.shape()[1]));
    Tensor q = matmul(h, block.cq);
    Tensor k = matmul(f_txt, block.ck);
    Tensor v = matmul(f_txt, block.cv);
    Tensor attn = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_d));
    return layer_norm_rows(add(h, matmul(attn, v)), block.ln_cross.gamma,
                           block.ln_cross.beta);
}

// ---- encoders --------------------------------------------------------------

TextEmbedder::TextEmbedder(const ModelConfig& cfg, Rng& rng)
    : max_tokens_(cfg.max_tokens) {
    const std::size_t vocab = cfg.vocab ? cfg.vocab : Vocabulary::instance().size();
    table = init_embedding(vocab, cfg.d, rng);
    pos = init_embedding(cfg.max_tokens, cfg.d, rng);
}

Tensor TextEmbedder::encode(const std::vector<std::size_t>& tokens) const {
    if (tokens.empty()) throw DataError("encode_text: empty token sequence");
    if (tokens.size() > max_tokens_)
        throw DataError("encode_text: sequence longer than " + std::to_string(max_tokens_));
    for (auto t : tokens)
        if (t >= table.shape()[0])
            throw DataError("encode_text: token id " + std::to_string(t) +
                            " outside the vocabulary");
    std::vector<std::size_t> iota(tokens.size());
    for (std::size_t i = 0; i < iota.size(); ++i) iota[i] = i;
    return add(gather_rows(table, tokens), gather_rows(pos, iota));
}

void TextEmbedder::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".table", table);
    out.emplace_back(prefix + ".pos", pos);
}

PointEncoder::PointEncoder(const ModelConfig& cfg, Rng& rng) {
    w1 = init_weight(6, cfg.d, rng);
    b1 = init_bias(cfg.d);
    ln1 = init_ln(cfg.d);
    w2 = init_weight(cfg.d, cfg.d, rng);
    b2 = init_bias(cfg.d);
    ln2 = init_ln(cfg.d);
    w3 = init_weight(cfg.d, cfg.d, rng);
    b3 = init_bias(cfg.d);
}

Tensor PointEncoder::encode(const std::vector<ObjectRecord>& objects) const {
    if (objects.empty()) throw DataError("encode_points: no objects");
    std::vector<Tensor> rows;
    rows.reserve(objects.size());
    for (const auto& obj : objects) {
        if (obj.points.empty() || obj.points.size() % 6 != 0)
            throw DataError("encode_points: object " + std::to_string(obj.id) +
                            " has an empty or malformed point set");
        const std::size_t n_p = obj.points.size() / 6;
        Tensor x = Tensor::constant({n_p, 6}, obj.points);
        Tensor h1 = relu(layer_norm_rows(add_row(matmul(x, w1), b1), ln1.gamma, ln1.beta));
        Tensor h2 = relu(layer_norm_rows(add_row(matmul(h1, w2), b2), ln2.gamma, ln2.beta));
        Tensor pooled = maxpool_rows(h2);
        rows.push_back(add_row(matmul(pooled, w3), b3));
    }
    return concat_rows(rows);
}

void PointEncoder::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w1", w1);
    out.emplace_back(prefix + ".b1", b1);
    collect_ln(out, prefix + ".ln1", ln1);
    out.emplace_back(prefix + ".w2", w2);
    out.emplace_back(prefix + ".b2", b2);
    collect_ln(out, prefix + ".ln2", ln2);
    out.emplace_back(prefix + ".w3", w3);
    out.emplace_back(prefix + ".b3", b3);
}

SemanticEncoder::SemanticEncoder(const ModelConfig& cfg, Rng& rng)
    : n_classes_(cfg.n_classes), n_attributes_(cfg.n_attributes) {
    w = init_weight(cfg.n_classes + cfg.n_attributes + 6, cfg.d, rng);
    b = init_bias(cfg.d);
}

Tensor SemanticEncoder::encode(const std::vector<ObjectRecord>& objects) const {
    if (objects.empty()) throw DataError("encode_gt_semantics: no objects");
    const std::size_t dim = n_classes_ + n_attributes_ + 6;
    std::vector<double> feat(objects.size() * dim, 0.0);
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto& o = objects[i];
        if (o.class_id < 0 || static_cast<std::size_t>(o.class_id) >= n_classes_)
            throw DataError("encode_gt_semantics: class id out of range");
        if (o.attribute_id < 0 || static_cast<std::size_t>(o.attribute_id) >= n_attributes_)
            throw DataError("encode_gt_semantics: attribute id out of range");
        double* f = feat.data() + i * dim;
        f[o.class_id] = 1.0;
        f[n_classes_ + static_cast<std::size_t>(o.attribute_id)] = 1.0;
        for (int k = 0; k < 3; ++k) {
            f[n_classes_ + n_attributes_ + static_cast<std::size_t>(k)] = o.centroid[k];
            f[n_classes_ + n_attributes_ + 3 + static_cast<std::size_t>(k)] = o.size[k];
        }
    }
    return add_row(matmul(Tensor::constant({objects.size(), dim}, std::move(feat)), w), b);
}

void SemanticEncoder::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

// ---- network ---------------------------------------------------------------

const char* input_mode_name(InputMode m) {
    return m == InputMode::Semantic ? "semantic" : "points";
}

InputMode input_mode_from_name(const std::string& name) {
    if (name == "semantic") return InputMode::Semantic;
    if (name == "points") return InputMode::Points;
    throw DataError("unknown input mode: " + name);
}

GroundingNetwork::GroundingNetwork(const ModelConfig& cfg, InputMode mode,
                                   std::uint64_t init_seed)
    : cfg_(cfg), mode_(mode) {
    Rng rng(init_seed);
    text = TextEmbedder(cfg, rng);
    if (mode == InputMode::Points)
        points = PointEncoder(cfg, rng);
    else
        semantics = SemanticEncoder(cfg, rng);
    for (std::size_t s = 0; s < cfg.blocks; ++s) {
        FusionBlock blk;
        blk.wq = init_weight(cfg.d, cfg.d, rng);
        blk.wk = init_weight(cfg.d, cfg.d, rng);
        blk.wv = init_weight(cfg.d, cfg.d, rng);
        blk.wo = init_weight(cfg.d, cfg.d, rng);
        blk.ws = init_weight(cfg.d, cfg.spatial_dim, rng);
        blk.b_spatial = Tensor::param({1}, {0.0});
        blk.ln_attn = init_ln(cfg.d);
        blk.cq = init_weight(cfg.d, cfg.d, rng);
        blk.ck = init_weight(cfg.d, cfg.d, rng);
        blk.cv = init_weight(cfg.d, cfg.d, rng);
        blk.ln_cross = init_ln(cfg.d);
        blk.w1 = init_weight(cfg.d, cfg.d * cfg.ffn_mult, rng);
        blk.b1 = init_bias(cfg.d * cfg.ffn_mult);
        blk.w2 = init_weight(cfg.d * cfg.ffn_mult, cfg.d, rng);
        blk.b2 = init_bias(cfg.d);
        blk.ln_ffn = init_ln(cfg.d);
        blk.head_w = init_weight(cfg.d, 1, rng);
        blk.head_b = Tensor::param({1}, {0.0});
        fusion.push_back(std::move(blk));
    }
}

FusionState GroundingNetwork::forward_embedded(
    const Tensor& x0, const Tensor& f_txt,
    const std::vector<std::array<double, 3>>& centroids) const {
    const std::size_t n = x0.shape()[0];
    const auto spatial = compute_pairwise_spatial(centroids);
    Tensor txt_pooled = mean_rows(f_txt);

    FusionState state;
    Tensor h = x0;
    for (const auto& blk : fusion) {
        auto sa = spatial_attention(h, txt_pooled, spatial, n, blk);
        Tensor hc = cross_attention(sa.hidden, f_txt, blk);
        Tensor ff = relu(add_row(matmul(hc, blk.w1), blk.b1));
        Tensor out = add_row(matmul(ff, blk.w2), blk.b2);
        h = layer_norm_rows(add(hc, out), blk.ln_ffn.gamma, blk.ln_ffn.beta);
        Tensor z = add_broadcast_scalar(matmul(h, blk.head_w), blk.head_b);
        state.hidden.push_back(h);
        state.attn.push_back(sa.a_fused);
        state.logits.push_back(z);
    }
    return state;
}

FusionState GroundingNetwork::forward(const std::vector<ObjectRecord>& objects,
                                      const std::vector<std::size_t>& tokens) const {
    Tensor x0 = mode_ == InputMode::Points ? points.encode(objects)
                                           : semantics.encode(objects);
    Tensor f_txt = text.encode(tokens);
    std::vector<std::array<double, 3>> centroids;
    centroids.reserve(objects.size());
    for (const auto& o : objects) centroids.push_back(o.centroid);
    return forward_embedded(x0, f_txt, centroids);
}

NamedParams GroundingNetwork::named_params() const {
    NamedParams out;
    text.collect(out, "text");
    if (mode_ == InputMode::Points)
        points.collect(out, "points");
    else
        semantics.collect(out, "semantics");
    for (std::size_t s = 0; s < fusion.size(); ++s) {
        const auto& blk = fusion[s];
        const std::string p = "fusion." + std::to_string(s);
        out.emplace_back(p + ".wq", blk.wq);
        out.emplace_back(p + ".wk", blk.wk);
        out.emplace_back(p + ".wv", blk.wv);
        out.emplace_back(p + ".wo", blk.wo);
        out.emplace_back(p + ".ws", blk.ws);
        out.emplace_back(p + ".b_spatial", blk.b_spatial);
        collect_ln(out, p + ".ln_attn", blk.ln_attn);
        out.emplace_back(p + ".cq", blk.cq);
        out.emplace_back(p + ".ck", blk.ck);
        out.emplace_back(p + ".cv", blk.cv);
        collect_ln(out, p + ".ln_cross", blk.ln_cross);
        out.emplace_back(p + ".w1", blk.w1);
        out.emplace_back(p + ".b1", blk.b1);
        out.emplace_back(p + ".w2", blk.w2);
        out.emplace_back(p + ".b2", blk.b2);
        collect_ln(out, p + ".ln_ffn", blk.ln_ffn);
        out.emplace_back(p + ".head_w", blk.head_w);
        out.emplace_back(p + ".head_b", blk.head_b);
    }
    return out;
}

void GroundingNetwork::zero_grad() const {
    for (auto& [name, t] : named_params()) const_cast<Tensor&>(t).zero_grad();
}

}  // namespace hcost
