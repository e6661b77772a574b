#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hcost/scene.hpp"
#include "hcost/tensor.hpp"

namespace hcost {

struct ModelConfig {
    std::size_t d = 64;          // shared hidden width
    std::size_t blocks = 3;      // fusion depth S
    std::size_t ffn_mult = 4;
    std::size_t max_tokens = 24;
    std::size_t vocab = 0;       // 0 -> take from Vocabulary
    std::size_t n_classes = 12;
    std::size_t n_attributes = 4;
    std::size_t spatial_dim = 5;

    bool operator==(const ModelConfig&) const = default;
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Pairwise geometric features, row-major (i*n + j)*5:
// [distance, sin th_h, cos th_h, sin th_v, cos th_v]; diagonal is [0,0,1,0,1].
std::vector<double> compute_pairwise_spatial(const std::vector<std::array<double, 3>>& centroids);

struct LayerNormParams {
    Tensor gamma, beta;
};

struct FusionBlock {
    Tensor wq, wk, wv, wo;       // self-attention, d x d
    Tensor ws;                   // spatial head, d x 5
    Tensor b_spatial;            // scalar gate bias
    LayerNormParams ln_attn;
    Tensor cq, ck, cv;           // cross-attention, d x d
    LayerNormParams ln_cross;
    Tensor w1, b1, w2, b2;       // feed-forward
    LayerNormParams ln_ffn;
    Tensor head_w, head_b;       // per-block prediction head, d -> 1
};

struct SpatialAttnOut {
    Tensor a_spatial;  // n x n, sigmoid gate
    Tensor a_fused;    // n x n, row-stochastic
    Tensor hidden;     // n x d, after projection + residual + layer norm
};

SpatialAttnOut spatial_attention(const Tensor& x, const Tensor& txt_pooled,
                                 const std::vector<double>& spatial, std::size_t n_obj,
                                 const FusionBlock& block);

Tensor cross_attention(const Tensor& h, const Tensor& f_txt, const FusionBlock& block);

struct FusionState {
    std::vector<Tensor> hidden;  // per block, n x d
    std::vector<Tensor> attn;    // per block fused maps, n x n
    std::vector<Tensor> logits;  // per block, n x 1
};

class TextEmbedder {
public:
    TextEmbedder() = default;
    TextEmbedder(const ModelConfig& cfg, Rng& rng);
    Tensor encode(const std::vector<std::size_t>& tokens) const;
    void collect(NamedParams& out, const std::string& prefix) const;

    Tensor table, pos;

private:
    std::size_t max_tokens_ = 24;
};

class PointEncoder {
public:
    PointEncoder() = default;
    PointEncoder(const ModelConfig& cfg, Rng& rng);
    // One row per object; exactly permutation-invariant over each point set.
    Tensor encode(const std::vector<ObjectRecord>& objects) const;
    void collect(NamedParams& out, const std::string& prefix) const;

    Tensor w1, b1, w2, b2, w3, b3;
    LayerNormParams ln1, ln2;
};

class SemanticEncoder {
public:
    SemanticEncoder() = default;
    SemanticEncoder(const ModelConfig& cfg, Rng& rng);
    Tensor encode(const std::vector<ObjectRecord>& objects) const;
    void collect(NamedParams& out, const std::string& prefix) const;

    Tensor w, b;

private:
    std::size_t n_classes_ = 12, n_attributes_ = 4;
};

enum class InputMode { Semantic, Points };

const char* input_mode_name(InputMode m);
InputMode input_mode_from_name(const std::string& name);

// One full network: text embedding, input encoder, S fusion blocks with
// per-block heads. Teacher and student differ only in InputMode.
class GroundingNetwork {
public:
    GroundingNetwork() = default;
    GroundingNetwork(const ModelConfig& cfg, InputMode mode, std::uint64_t init_seed);

    FusionState forward(const std::vector<ObjectRecord>& objects,
                        const std::vector<std::size_t>& tokens) const;
    // Forward from a caller-supplied initial object embedding (testing hook).
    FusionState forward_embedded(const Tensor& x0, const Tensor& f_txt,
                                 const std::vector<std::array<double, 3>>& centroids) const;

    NamedParams named_params() const;
    void zero_grad() const;

    const ModelConfig& config() const { return cfg_; }
    InputMode mode() const { return mode_; }

    TextEmbedder text;
    PointEncoder points;
    SemanticEncoder semantics;
    std::vector<FusionBlock> fusion;

private:
    ModelConfig cfg_;
    InputMode mode_ = InputMode::Semantic;
};

}  // namespace hcost
