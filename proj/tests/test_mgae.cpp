#include "percept/mgae.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "percept/rng.hpp"
#include "percept/scene_graph.hpp"
#include "percept/text_embedding.hpp"

using namespace percept;
using ad::Tape;
using ad::Tensor;

namespace {

SceneGraph random_scene(Rng& rng, std::size_t min_nodes = 3, std::size_t max_nodes = 8) {
    static const char* kLabels[] = {"car", "road", "tree", "building", "person", "bench"};
    static const char* kPreds[] = {"on", "near", "beside"};
    SceneGraph g;
    g.scene_id = "g" + std::to_string(rng.below(1u << 30));
    const std::size_t n = min_nodes + rng.below(max_nodes - min_nodes + 1);
    for (std::size_t i = 0; i < n; ++i)
        g.nodes.push_back({static_cast<std::int64_t>(i), kLabels[rng.below(6)]});
    const std::size_t m = 1 + rng.below(2 * n);
    for (std::size_t j = 0; j < m; ++j) {
        const auto a = rng.below(n), b = rng.below(n);
        g.edges.push_back({static_cast<std::int64_t>(a), static_cast<std::int64_t>(b),
                           kPreds[rng.below(3)]});
    }
    return g;
}

FeaturizedGraph featurized(const SceneGraph& g, std::size_t d_t = 16, std::uint64_t seed = 0) {
    return featurize_graph(TextEmbedder::hashed(d_t, seed), g);
}

// Relabels node positions by `perm` (new position i holds old node perm[i])
// while keeping the edge list order.
SceneGraph permute_nodes(const SceneGraph& g, const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
    SceneGraph out;
    out.scene_id = g.scene_id;
    out.city = g.city;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        out.nodes.push_back({static_cast<std::int64_t>(i), g.nodes[perm[i]].label});
    for (const auto& e : g.edges) {
        const std::size_t old_src = g.node_index(e.src), old_dst = g.node_index(e.dst);
        out.edges.push_back({static_cast<std::int64_t>(inverse[old_src]),
                             static_cast<std::int64_t>(inverse[old_dst]), e.predicate});
    }
    return out;
}

TEST(MpLayer, IsolatedNodeIsSelfPathOnly) {
    SceneGraph g;
    g.scene_id = "iso";
    g.nodes = {{0, "tree"}};
    auto fg = featurized(g, 8);
    Rng rng(1);
    mgae::LayerParams p = mgae::LayerParams::init(8, 8, 5, rng);
    Tape tape;
    Tensor* h = tape.constant(fg.node_features);
    Tensor* out = mgae::mp_layer(tape, h, fg, p);
    ASSERT_EQ(out->rows, 1u);
    ASSERT_EQ(out->cols, 5u);
    for (std::size_t j = 0; j < 5; ++j) {
        double pre = p.bias.data[j];
        for (std::size_t i = 0; i < 8; ++i) pre += fg.node_features.at(0, i) * p.w_self.at(i, j);
        const double expected = pre > 0 ? pre : mgae::kLeakyAlpha * pre;
        EXPECT_NEAR(out->at(0, j), expected, 1e-12);
    }
}

TEST(MpLayer, ZeroWeightsLeaveOnlyBias) {
    auto fg = featurized(from_triplets("t", {{"car", "on", "road", 0, 0}}), 8);
    mgae::LayerParams p;
    p.w_self = Tensor(8, 5, true);
    p.w_in = Tensor(16, 5, true);
    p.w_out = Tensor(16, 5, true);
    p.bias = Tensor(1, 5, true);
    p.bias.data = {1.0, -1.0, 0.5, -0.5, 2.0};
    Tape tape;
    Tensor* out = mgae::mp_layer(tape, tape.constant(fg.node_features), fg, p);
    for (std::size_t i = 0; i < out->rows; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            const double b = p.bias.data[j];
            EXPECT_DOUBLE_EQ(out->at(i, j), b > 0 ? b : mgae::kLeakyAlpha * b);
        }
}

TEST(MpLayer, PermutationEquivariant) {
    Rng rng(2);
    for (int iter = 0; iter < 10; ++iter) {
        SceneGraph g = random_scene(rng);
        std::vector<std::size_t> perm(g.nodes.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        rng.shuffle(perm);
        SceneGraph pg = permute_nodes(g, perm);
        auto fg = featurized(g), pfg = featurized(pg);
        Rng wrng(3);
        mgae::LayerParams p = mgae::LayerParams::init(16, 16, 6, wrng);
        Tape tape;
        Tensor* a = mgae::mp_layer(tape, tape.constant(fg.node_features), fg, p);
        Tensor* b = mgae::mp_layer(tape, tape.constant(pfg.node_features), pfg, p);
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (std::size_t j = 0; j < 6; ++j)
                EXPECT_DOUBLE_EQ(b->at(i, j), a->at(perm[i], j));
    }
}

TEST(MaskNodes, ExactCountAndRange) {
    Rng rng(4);
    auto mask = mgae::sample_mask(10, 0.5, rng);
    EXPECT_EQ(mask.size(), 5u);
    std::set<std::size_t> unique(mask.begin(), mask.end());
    EXPECT_EQ(unique.size(), 5u);
    for (std::size_t i : mask) EXPECT_LT(i, 10u);
}

TEST(MaskNodes, AtLeastOneNode) {
    Rng rng(5);
    EXPECT_EQ(mgae::sample_mask(1, 0.01, rng).size(), 1u);
    EXPECT_EQ(mgae::sample_mask(3, 0.05, rng).size(), 1u);
}

TEST(MaskNodes, RoundingRule) {
    Rng rng(6);
    // round(0.5 * 7) = 4 (half away from zero)
    EXPECT_EQ(mgae::sample_mask(7, 0.5, rng).size(), 4u);
    EXPECT_EQ(mgae::sample_mask(10, 0.26, rng).size(), 3u);
}

TEST(MaskNodes, SameSeedSameMask) {
    Rng a(7), b(7);
    EXPECT_EQ(mgae::sample_mask(20, 0.5, a), mgae::sample_mask(20, 0.5, b));
}

TEST(MaskNodes, RateOutsideUnitIntervalRejected) {
    Rng rng(8);
    EXPECT_THROW(mgae::sample_mask(5, 0.0, rng), DataError);
    EXPECT_THROW(mgae::sample_mask(5, 1.0, rng), DataError);
}

TEST(Encode, OutputWidthIs128) {
    Rng rng(9);
    auto fg = featurized(random_scene(rng));
    Rng wrng(10);
    mgae::EncoderModel m = mgae::EncoderModel::init(16, 24, wrng);
    Tape tape;
    Tensor* h = mgae::encode(tape, fg, m);
    EXPECT_EQ(h->rows, fg.node_count());
    EXPECT_EQ(h->cols, 128u);
}

TEST(Encode, ZeroEdgeGraphIsPerNodeMlp) {
    SceneGraph g;
    g.scene_id = "iso3";
    g.nodes = {{0, "car"}, {1, "tree"}, {2, "road"}};
    auto fg = featurized(g, 8);
    Rng wrng(11);
    mgae::EncoderModel m = mgae::EncoderModel::init(8, 6, wrng);
    Tape tape;
    Tensor* h = mgae::encode(tape, fg, m);
    // hand-compose the empty-aggregation formula layer by layer
    auto lrelu = [](double x) { return x > 0 ? x : mgae::kLeakyAlpha * x; };
    for (std::size_t v = 0; v < 3; ++v) {
        std::vector<double> cur(8);
        for (std::size_t j = 0; j < 8; ++j) cur[j] = fg.node_features.at(v, j);
        for (const auto& layer : m.layers) {
            std::vector<double> next(layer.w_self.cols);
            for (std::size_t j = 0; j < next.size(); ++j) {
                double acc = layer.bias.data[j];
                for (std::size_t i = 0; i < cur.size(); ++i)
                    acc += cur[i] * layer.w_self.at(i, j);
                next[j] = lrelu(acc);
            }
            cur = std::move(next);
        }
        for (std::size_t j = 0; j < 128; ++j) EXPECT_NEAR(h->at(v, j), cur[j], 1e-12);
    }
}

TEST(RemaskDecode, OutputWidthIsFeatureDim) {
    Rng rng(12);
    auto fg = featurized(random_scene(rng));
    Rng wrng(13);
    mgae::EncoderModel m = mgae::EncoderModel::init(16, 24, wrng);
    mgae::DecoderModel d = mgae::DecoderModel::init(16, wrng);
    Tape tape;
    Tensor* h = mgae::encode(tape, fg, m);
    Tensor* xhat = mgae::remask_decode(tape, h, {0, 1}, d, fg);
    EXPECT_EQ(xhat->rows, fg.node_count());
    EXPECT_EQ(xhat->cols, 16u);
}

TEST(RemaskDecode, AllMaskedEdgelessGraphDecodesIdenticalRows) {
    SceneGraph g;
    g.scene_id = "flat";
    g.nodes = {{0, "a"}, {1, "b"}, {2, "c"}};
    auto fg = featurized(g, 8);
    Rng wrng(14);
    mgae::EncoderModel m = mgae::EncoderModel::init(8, 6, wrng);
    mgae::DecoderModel d = mgae::DecoderModel::init(8, wrng);
    Tape tape;
    Tensor* h = mgae::encode(tape, fg, m);
    Tensor* xhat = mgae::remask_decode(tape, h, {0, 1, 2}, d, fg);
    // with every latent row replaced by the token and no edges, rows can only
    // be identical
    for (std::size_t v = 1; v < 3; ++v)
        for (std::size_t j = 0; j < 8; ++j)
            EXPECT_DOUBLE_EQ(xhat->at(v, j), xhat->at(0, j));
}

TEST(RemaskDecode, EmptyMaskIsPureDecode) {
    Rng rng(15);
    auto fg = featurized(random_scene(rng));
    Rng wrng(16);
    mgae::EncoderModel m = mgae::EncoderModel::init(16, 24, wrng);
    mgae::DecoderModel d = mgae::DecoderModel::init(16, wrng);
    Tape tape;
    Tensor* h = mgae::encode(tape, fg, m);
    Tensor* a = mgae::remask_decode(tape, h, {}, d, fg);
    Tensor* b = mgae::mp_layer(tape, h, fg, d.layer);
    EXPECT_EQ(a->data, b->data);
}

TEST(SceLoss, ScaledCopyIsZero) {
    Tensor x(3, 4), xhat(3, 4);
    Rng rng(17);
    for (double& v : x.data) v = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < x.data.size(); ++i) xhat.data[i] = 2.5 * x.data[i];
    Tape tape;
    EXPECT_NEAR(mgae::sce_loss(tape, &x, &xhat, {0, 1, 2}, 2.0)->data[0], 0.0, 1e-9);
}

TEST(SceLoss, OrthogonalRowsGammaTwoIsOne) {
    Tensor x(2, 4), xhat(2, 4);
    x.at(0, 0) = 1.0;
    x.at(1, 1) = 1.0;
    xhat.at(0, 2) = 1.0;
    xhat.at(1, 3) = 1.0;
    Tape tape;
    EXPECT_NEAR(mgae::sce_loss(tape, &x, &xhat, {0, 1}, 2.0)->data[0], 1.0, 1e-9);
}

TEST(SceLoss, AntiparallelGammaOneIsTwo) {
    Tensor x(1, 4), xhat(1, 4);
    x.data = {0.5, -0.25, 1.0, 2.0};
    for (std::size_t i = 0; i < 4; ++i) xhat.data[i] = -x.data[i];
    Tape tape;
    EXPECT_NEAR(mgae::sce_loss(tape, &x, &xhat, {0}, 1.0)->data[0], 2.0, 1e-9);
}

TEST(SceLoss, EmptyMaskRejected) {
    Tensor x(2, 4), xhat(2, 4);
    Tape tape;
    EXPECT_THROW(mgae::sce_loss(tape, &x, &xhat, {}, 2.0), DataError);
}

TEST(SceLoss, BoundedByTwoToTheGamma) {
    Rng rng(18);
    for (int iter = 0; iter < 50; ++iter) {
        const double gamma = 1.0 + rng.below(3);
        Tensor x(4, 6), xhat(4, 6);
        for (double& v : x.data) v = rng.uniform(-2, 2);
        for (double& v : xhat.data) v = rng.uniform(-2, 2);
        Tape tape;
        const double loss = mgae::sce_loss(tape, &x, &xhat, {0, 1, 2, 3}, gamma)->data[0];
        EXPECT_GE(loss, 0.0);
        EXPECT_LE(loss, std::pow(2.0, gamma) + 1e-12);
    }
}

TEST(SceLoss, FullPipelineGradientMatchesFiniteDifferences) {
    // instances whose forward pass grazes a leaky_relu kink (or a near-zero
    // cosine row) are not checkable by central differences; redraw those
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 60 && checked < 3; ++seed) {
        Rng rng(seed);
        SceneGraph g = random_scene(rng, 5, 6);
        auto fg = featurized(g, 8);
        mgae::EncoderModel m = mgae::EncoderModel::init(8, 6, rng);
        mgae::DecoderModel d = mgae::DecoderModel::init(8, rng);
        const auto mask = mgae::sample_mask(fg.node_count(), 0.5, rng);
        auto f = [&](Tape& t) {
            Tensor* x = t.constant(fg.node_features);
            Tensor* masked = t.replace_rows(x, &m.mask_token, mask);
            Tensor* h = mgae::encode(t, fg, m, masked);
            Tensor* xhat = mgae::remask_decode(t, h, mask, d, fg);
            return mgae::sce_loss(t, x, xhat, mask, 2.0);
        };
        if (!ad::fd_smooth_at(f)) continue;
        std::vector<Tensor*> params = m.tensors();
        for (Tensor* t : d.tensors()) params.push_back(t);
        EXPECT_LT(ad::grad_check(f, params), 1e-4) << "seed " << seed;
        ++checked;
    }
    EXPECT_EQ(checked, 3);
}

TEST(Pretrain, ZeroEpochsReturnsInitializedModel) {
    Rng rng(22);
    std::vector<FeaturizedGraph> data{featurized(random_scene(rng))};
    mgae::PretrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 5;
    cfg.hidden = 12;
    auto result = mgae::pretrain(data, cfg);
    Rng init_rng(cfg.seed, "init");
    mgae::EncoderModel fresh = mgae::EncoderModel::init(16, 12, init_rng);
    EXPECT_EQ(result.encoder.layers[0].w_self.data, fresh.layers[0].w_self.data);
    EXPECT_TRUE(result.epoch_loss.empty());
}

TEST(Pretrain, DeterministicCheckpointBytes) {
    auto run = [] {
        Rng rng(23);
        std::vector<FeaturizedGraph> data;
        for (int i = 0; i < 6; ++i) data.push_back(featurized(random_scene(rng)));
        mgae::PretrainConfig cfg;
        cfg.epochs = 4;
        cfg.batch_size = 4;
        cfg.seed = 99;
        cfg.hidden = 12;
        auto result = mgae::pretrain(data, cfg);
        return mgae::save_encoder(result.encoder, {});
    };
    EXPECT_EQ(run(), run());
}

TEST(Pretrain, LossDecreasesOnSmallCorpus) {
    Rng rng(24);
    std::vector<FeaturizedGraph> data;
    for (int i = 0; i < 12; ++i) data.push_back(featurized(random_scene(rng)));
    mgae::PretrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 12;
    cfg.seed = 3;
    cfg.hidden = 16;
    auto result = mgae::pretrain(data, cfg);
    ASSERT_EQ(result.epoch_loss.size(), 40u);
    EXPECT_LT(result.epoch_loss.back(), result.epoch_loss.front());
}

TEST(Pretrain, EmptyDatasetRejected) {
    EXPECT_THROW(mgae::pretrain({}, {}), DataError);
}

TEST(SceneEmbedding, SingleNodeEqualsEncoderRow) {
    SceneGraph g;
    g.scene_id = "one";
    g.nodes = {{0, "tree"}};
    auto fg = featurized(g, 8);
    Rng wrng(25);
    mgae::EncoderModel m = mgae::EncoderModel::init(8, 6, wrng);
    auto z = mgae::scene_embedding(fg, m);
    ASSERT_EQ(z.size(), 128u);
    Tape tape(false);
    Tensor* h = mgae::encode(tape, fg, m);
    for (std::size_t j = 0; j < 128; ++j) EXPECT_DOUBLE_EQ(z[j], h->at(0, j));
}

TEST(SceneEmbedding, PermutationInvariant) {
    Rng rng(26);
    Rng wrng(27);
    mgae::EncoderModel m = mgae::EncoderModel::init(16, 12, wrng);
    for (int iter = 0; iter < 20; ++iter) {
        SceneGraph g = random_scene(rng);
        std::vector<std::size_t> perm(g.nodes.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        rng.shuffle(perm);
        auto za = mgae::scene_embedding(featurized(g), m);
        auto zb = mgae::scene_embedding(featurized(permute_nodes(g, perm)), m);
        for (std::size_t j = 0; j < 128; ++j) EXPECT_NEAR(za[j], zb[j], 1e-9);
    }
}

TEST(EncoderCheckpoint, RoundTripBytes) {
    Rng wrng(28);
    mgae::EncoderModel m = mgae::EncoderModel::init(16, 12, wrng);
    nlohmann::ordered_json header;
    header["seed"] = 1;
    const std::string once = mgae::save_encoder(m, header);
    mgae::EncoderModel loaded = mgae::load_encoder(once);
    nlohmann::ordered_json header2;
    header2["seed"] = 1;
    EXPECT_EQ(mgae::save_encoder(loaded, header2), once);
    EXPECT_EQ(loaded.hidden, 12u);
    EXPECT_EQ(loaded.d_t, 16u);
}

}  // namespace
