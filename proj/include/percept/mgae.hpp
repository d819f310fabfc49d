#pragma once

// Masked graph autoencoder over featurized scene graphs.
//
// Encoder layers are edge-conditioned message passing with separate weights
// for the incoming and outgoing direction:
//
//   h'_v = leaky_relu( h_v W_self
//                      + mean over edges (u -> v) of [h_u || x_e] W_in
//                      + mean over edges (v -> w) of [h_w || x_e] W_out
//                      + bias )
//
// Nodes with no neighbors in a direction contribute zero for that term.
// Pretraining masks max(1, round(rate * n)) node rows per graph, encodes,
// re-masks the latent rows with a decoder token, decodes with one more
// message-passing layer back to d_t, and minimizes the scaled cosine error
// (1 - cos)^gamma over the masked rows. The decoder is dropped after
// pretraining; the scene embedding is the column-wise mean of the final
// 128-wide node embeddings.

#include <cstdint>
#include <string>
#include <vector>

#include "percept/autodiff.hpp"
#include "percept/checkpoint.hpp"
#include "percept/errors.hpp"
#include "percept/optimizer.hpp"
#include "percept/rng.hpp"
#include "percept/text_embedding.hpp"

namespace percept::mgae {

using ad::Tape;
using ad::Tensor;

inline constexpr std::size_t kEmbedDim = 128;
inline constexpr double kLeakyAlpha = 0.2;

struct LayerParams {
    Tensor w_self;  // d_in x d_out
    Tensor w_in;    // (d_in + d_t) x d_out
    Tensor w_out;   // (d_in + d_t) x d_out
    Tensor bias;    // 1 x d_out

    static LayerParams init(std::size_t d_in, std::size_t d_t, std::size_t d_out, Rng& rng) {
        LayerParams p;
        p.w_self = xavier(d_in, d_out, rng);
        p.w_in = xavier(d_in + d_t, d_out, rng);
        p.w_out = xavier(d_in + d_t, d_out, rng);
        p.bias = Tensor(1, d_out, true);
        return p;
    }

    static Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        Tensor t(fan_in, fan_out, true);
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : t.data) v = rng.uniform(-a, a);
        return t;
    }

    std::vector<Tensor*> tensors() { return {&w_self, &w_in, &w_out, &bias}; }

    void collect(const std::string& prefix, std::map<std::string, const Tensor*>& out) const {
        out[prefix + ".w_self"] = &w_self;
        out[prefix + ".w_in"] = &w_in;
        out[prefix + ".w_out"] = &w_out;
        out[prefix + ".bias"] = &bias;
    }

    void restore(const ad::Checkpoint& ck, const std::string& prefix) {
        ad::restore_param(ck, prefix + ".w_self", w_self);
        ad::restore_param(ck, prefix + ".w_in", w_in);
        ad::restore_param(ck, prefix + ".w_out", w_out);
        ad::restore_param(ck, prefix + ".bias", bias);
    }
};

struct EncoderModel {
    std::vector<LayerParams> layers;
    Tensor mask_token;  // 1 x d_t
    std::size_t d_t = 0;
    std::size_t hidden = 256;

    static EncoderModel init(std::size_t d_t, std::size_t hidden, Rng& rng) {
        EncoderModel m;
        m.d_t = d_t;
        m.hidden = hidden;
        m.layers.push_back(LayerParams::init(d_t, d_t, hidden, rng));
        m.layers.push_back(LayerParams::init(hidden, d_t, kEmbedDim, rng));
        // random, not zero: an isolated masked node would otherwise decode to
        // an exactly-zero row, the singular point of the cosine loss
        m.mask_token = LayerParams::xavier(1, d_t, rng);
        return m;
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& l : layers)
            for (Tensor* t : l.tensors()) out.push_back(t);
        out.push_back(&mask_token);
        return out;
    }
};

struct DecoderModel {
    LayerParams layer;   // kEmbedDim -> d_t
    Tensor remask_token;  // 1 x kEmbedDim

    static DecoderModel init(std::size_t d_t, Rng& rng) {
        DecoderModel d;
        d.layer = LayerParams::init(kEmbedDim, d_t, d_t, rng);
        d.remask_token = LayerParams::xavier(1, kEmbedDim, rng);
        return d;
    }

    std::vector<Tensor*> tensors() {
        auto out = layer.tensors();
        out.push_back(&remask_token);
        return out;
    }
};

struct PretrainConfig {
    double mask_rate = 0.5;
    double gamma = 2.0;
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double lr = 1e-3;
    std::size_t hidden = 256;
};

// One message-passing layer. `h` must have one row per node of `fg`.
inline Tensor* mp_layer(Tape& tape, Tensor* h, const FeaturizedGraph& fg, LayerParams& p,
                        double alpha = kLeakyAlpha) {
    if (h->rows != fg.node_count())
        throw ShapeError("mp_layer: feature rows " + std::to_string(h->rows) +
                         " != node count " + std::to_string(fg.node_count()));
    Tensor* pre = tape.matmul(h, &p.w_self);
    if (fg.edge_count() > 0) {
        auto* edge_feat = const_cast<Tensor*>(&fg.edge_features);
        Tensor* in_msg = tape.concat_cols(tape.select_rows(h, fg.edge_src), edge_feat);
        Tensor* out_msg = tape.concat_cols(tape.select_rows(h, fg.edge_dst), edge_feat);
        Tensor* agg_in = tape.matmul(const_cast<Tensor*>(&fg.agg_in), tape.matmul(in_msg, &p.w_in));
        Tensor* agg_out =
            tape.matmul(const_cast<Tensor*>(&fg.agg_out), tape.matmul(out_msg, &p.w_out));
        pre = tape.add(tape.add(pre, agg_in), agg_out);
    }
    pre = tape.add(pre, &p.bias);
    return tape.leaky_relu(pre, alpha);
}

// max(1, round(rate * n)) distinct node indices, ascending.
inline std::vector<std::size_t> sample_mask(std::size_t n_nodes, double rate, Rng& rng) {
    if (!(rate > 0.0 && rate < 1.0)) throw DataError("mask rate must be in (0, 1)");
    auto k = static_cast<std::size_t>(
        std::max<long>(1, std::lround(rate * static_cast<double>(n_nodes))));
    if (k > n_nodes) k = n_nodes;
    return rng.sample_indices(n_nodes, k);
}

// Sequential application of the encoder layers. `features_override` replaces
// the graph's node features as layer-0 input (used for masked training).
inline Tensor* encode(Tape& tape, const FeaturizedGraph& fg, EncoderModel& m,
                      Tensor* features_override = nullptr) {
    Tensor* h = features_override ? features_override
                                  : tape.constant(fg.node_features);
    for (auto& layer : m.layers) h = mp_layer(tape, h, fg, layer);
    return h;
}

// Replaces masked latent rows with the decoder token, then maps back to d_t
// with one message-passing layer.
inline Tensor* remask_decode(Tape& tape, Tensor* h, const std::vector<std::size_t>& mask,
                             DecoderModel& d, const FeaturizedGraph& fg) {
    Tensor* remasked = tape.replace_rows(h, &d.remask_token, mask);
    return mp_layer(tape, remasked, fg, d.layer);
}

// Scaled cosine error over the masked rows:
//   L = (1/|M|) * sum_{v in M} (1 - cos(x_v, xhat_v))^gamma
inline Tensor* sce_loss(Tape& tape, Tensor* x, Tensor* xhat,
                        const std::vector<std::size_t>& mask, double gamma) {
    if (mask.empty()) throw DataError("sce_loss: empty mask set");
    Tensor* xs = tape.select_rows(x, mask);
    Tensor* xh = tape.select_rows(xhat, mask);
    Tensor* cos = tape.cosine_similarity_rows(xs, xh);
    Tensor* err = tape.add(tape.scale(cos, -1.0), tape.constant_fill(mask.size(), 1, 1.0));
    return tape.mean(tape.pow(err, gamma));
}

struct PretrainResult {
    EncoderModel encoder;
    std::vector<double> epoch_loss;  // mean SCE per epoch
};

// Full pretraining loop: mask -> encode -> remask-decode -> SCE -> Adam.
// Deterministic given (dataset order, config): all randomness flows through
// the named "init" / "mask" / "batch" substreams of cfg.seed.
inline PretrainResult pretrain(const std::vector<FeaturizedGraph>& dataset,
                               const PretrainConfig& cfg) {
    if (dataset.empty()) throw DataError("pretrain: empty dataset");
    if (!(cfg.gamma >= 1.0)) throw DataError("pretrain: gamma must be >= 1");
    const std::size_t d_t = dataset.front().feature_dim();
    for (const auto& fg : dataset)
        if (fg.feature_dim() != d_t) throw DataError("pretrain: mixed feature widths");

    Rng init_rng(cfg.seed, "init");
    Rng mask_rng(cfg.seed, "mask");
    Rng batch_rng(cfg.seed, "batch");

    PretrainResult result{EncoderModel::init(d_t, cfg.hidden, init_rng), {}};
    DecoderModel decoder = DecoderModel::init(d_t, init_rng);

    std::vector<Tensor*> params = result.encoder.tensors();
    for (Tensor* t : decoder.tensors()) params.push_back(t);
    ad::Adam adam(params, {.lr = cfg.lr});

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch_size = cfg.batch_size > 0 ? static_cast<std::size_t>(cfg.batch_size)
                                                      : dataset.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch_rng.shuffle(order);
        double epoch_acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            Tape tape;
            Tensor* batch_loss = nullptr;
            try {
                for (std::size_t b = start; b < end; ++b) {
                    const FeaturizedGraph& fg = dataset[order[b]];
                    auto mask = sample_mask(fg.node_count(), cfg.mask_rate, mask_rng);
                    Tensor* x = tape.constant(fg.node_features);
                    Tensor* masked = tape.replace_rows(x, &result.encoder.mask_token, mask);
                    Tensor* h = encode(tape, fg, result.encoder, masked);
                    Tensor* xhat = remask_decode(tape, h, mask, decoder, fg);
                    Tensor* loss = sce_loss(tape, x, xhat, mask, cfg.gamma);
                    epoch_acc += loss->data[0];
                    batch_loss = batch_loss ? tape.add(batch_loss, loss) : loss;
                }
                Tensor* scaled =
                    tape.scale(batch_loss, 1.0 / static_cast<double>(end - start));
                tape.backward(scaled);
            } catch (const TrainingDivergence& e) {
                throw TrainingDivergence("pretrain diverged at epoch " + std::to_string(epoch) +
                                         ", batch starting at " + std::to_string(start) + ": " +
                                         e.what());
            }
            adam.step();
        }
        result.epoch_loss.push_back(epoch_acc / static_cast<double>(dataset.size()));
    }
    return result;
}

// Mean-pooled 128-wide scene embedding under a frozen encoder. Read-only on
// the model; safe to call concurrently for distinct graphs.
inline std::vector<double> scene_embedding(const FeaturizedGraph& fg, const EncoderModel& model) {
    Tape tape(false);
    Tensor* h = encode(tape, fg, const_cast<EncoderModel&>(model));
    Tensor* pooled = tape.row_mean(h);
    return pooled->data;
}

inline constexpr const char* kCheckpointKind = "mgae-encoder";

inline std::string save_encoder(const EncoderModel& m, nlohmann::ordered_json header) {
    header["kind"] = kCheckpointKind;
    header["d_t"] = m.d_t;
    header["hidden"] = m.hidden;
    header["d_z"] = kEmbedDim;
    header["layers"] = m.layers.size();
    std::map<std::string, const Tensor*> params;
    for (std::size_t i = 0; i < m.layers.size(); ++i)
        m.layers[i].collect("layer" + std::to_string(i), params);
    params["mask_token"] = &m.mask_token;
    return ad::save_checkpoint(params, header);
}

inline EncoderModel load_encoder(const std::string& text) {
    ad::Checkpoint ck = ad::load_checkpoint(text);
    if (ck.header.value("kind", "") != kCheckpointKind)
        throw DataError("not an encoder checkpoint");
    Rng dummy(0);
    EncoderModel m = EncoderModel::init(ck.header.at("d_t").get<std::size_t>(),
                                        ck.header.at("hidden").get<std::size_t>(), dummy);
    for (std::size_t i = 0; i < m.layers.size(); ++i)
        m.layers[i].restore(ck, "layer" + std::to_string(i));
    ad::restore_param(ck, "mask_token", m.mask_token);
    return m;
}

}  // namespace percept::mgae
