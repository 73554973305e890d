#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <casgnn/graph.hpp>
#include <casgnn/ops.hpp>

#include "oracles.hpp"

using namespace casgnn;

namespace {

template <class S>
Conv2d<S> zero_conv(int in_c, int out_c, int k, int pad) {
  Conv2d<S> conv;
  conv.stride = 1;
  conv.padding = pad;
  conv.weight = Tensor<S>::zeros({out_c, in_c, k, k}, true);
  conv.bias = Tensor<S>::zeros({1, out_c, 1, 1}, true);
  return conv;
}

template <class S>
Conv2d<S> identity_conv1x1(int c) {
  auto conv = zero_conv<S>(c, c, 1, 0);
  for (int i = 0; i < c; ++i) conv.weight.at(i, i, 0, 0) = S(1);
  return conv;
}

template <class S>
std::vector<Tensor<S>> random_states(int count, Shape shape, Rng& rng) {
  std::vector<Tensor<S>> states;
  for (int i = 0; i < count; ++i) states.push_back(oracles::random_tensor<S>(shape, rng));
  return states;
}

}  // namespace

TEST_CASE("topology edge counts follow 2n(n-1) + 2n") {
  for (int n : {1, 2, 3, 5}) {
    auto topo = GraphTopology::build(n);
    CHECK(topo.node_count() == 2 * n);
    CHECK(static_cast<int>(topo.edges.size()) == 2 * n * (n - 1) + 2 * n);
    // cross-modality edges exist exactly between equal scale indices
    int cross = 0;
    for (const auto& e : topo.edges) {
      const auto& a = topo.nodes[e.src];
      const auto& b = topo.nodes[e.dst];
      if (a.modality != b.modality) {
        CHECK(a.scale_index == b.scale_index);
        ++cross;
      }
    }
    CHECK(cross == 2 * n);
  }
  CHECK_THROWS_AS(GraphTopology::build(0), ConfigError);
}

TEST_CASE("build_nodes constant chain and identity path") {
  Rng rng(1);
  const int c = 4;
  auto feat = TensorF::full({1, c, 8, 8}, 0.37f);
  std::vector<Conv2d<float>> proj = {identity_conv1x1<float>(c), identity_conv1x1<float>(c)};
  auto nodes = build_nodes(feat, proj, {2, 4}, 8, 8);
  REQUIRE(nodes.size() == 2);
  for (const auto& node : nodes) {
    for (float v : node.data()) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
  }

  // scale equal to the feature size with an identity conv reproduces the map
  auto random_feat = oracles::random_tensor<float>({1, c, 6, 6}, rng);
  std::vector<Conv2d<float>> proj1 = {identity_conv1x1<float>(c)};
  auto full = build_nodes(random_feat, proj1, {6}, 6, 6);
  CHECK(oracles::max_abs_diff(full[0], random_feat) == 0.0);

  CHECK_THROWS_AS(build_nodes(random_feat, proj1, {7}, 6, 6), ConfigError);
}

TEST_CASE("build_nodes matches the pool-conv-resize composition oracle") {
  Rng rng(2);
  auto feat = oracles::random_tensor<double>({1, 8, 16, 16}, rng);
  const int c = 16;
  std::vector<Conv2d<double>> proj;
  std::vector<int> scales = {2, 4, 8};
  Rng wrng(3);
  for (std::size_t i = 0; i < scales.size(); ++i)
    proj.push_back(Conv2d<double>::init(8, c, 1, 1, 0, wrng));
  auto nodes = build_nodes(feat, proj, scales, 16, 16);
  for (std::size_t i = 0; i < scales.size(); ++i) {
    auto pooled = oracles::adaptive_pool_oracle(feat, scales[i], scales[i]);
    auto projected = oracles::conv_oracle(pooled, proj[i].weight, proj[i].bias, 1, 0);
    auto expected = oracles::resize_oracle(projected, 16, 16);
    CHECK(oracles::max_abs_diff(nodes[i], expected) < 1e-6);
  }
}

TEST_CASE("edge embeddings: equal nodes, bias-only, composition oracle") {
  Rng rng(4);
  const Shape shape{1, 3, 6, 6};
  auto topo = GraphTopology::build(2);

  // equal nodes with zero bias give exactly zero edges
  auto v = oracles::random_tensor<float>(shape, rng);
  std::vector<TensorF> equal_states = {v, v, v, v};
  auto econv = Conv2d<float>::init(3, 3, 3, 1, 1, rng);
  for (auto& b : econv.bias.data()) b = 0.0f;
  for (const auto& e : compute_edges(equal_states, topo, econv)) {
    for (float x : e.data()) CHECK(x == 0.0f);
  }

  // zero weights leave only the bias
  auto states = random_states<float>(4, shape, rng);
  auto bias_conv = zero_conv<float>(3, 3, 3, 1);
  bias_conv.bias.data() = {0.25f, -1.5f, 2.0f};
  for (const auto& e : compute_edges(states, topo, bias_conv)) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) CHECK(e.at(0, c, y, x) == bias_conv.bias.data()[c]);
  }

  // random pair equals the conv applied to the explicit difference
  Rng drng(5);
  auto dstates = random_states<double>(4, shape, drng);
  auto dconv = Conv2d<double>::init(3, 3, 3, 1, 1, drng);
  auto edges = compute_edges(dstates, topo, dconv);
  for (std::size_t i = 0; i < topo.edges.size(); ++i) {
    auto direct = dconv(sub(dstates[topo.edges[i].dst], dstates[topo.edges[i].src]));
    CHECK(oracles::max_abs_diff(edges[i], direct) < 1e-6);
  }
}

TEST_CASE("half-gate identity: zero edge conv makes messages half-sums") {
  Rng rng(6);
  const Shape shape{1, 4, 5, 5};
  auto topo = GraphTopology::build(3);
  auto states = random_states<float>(6, shape, rng);
  auto edges = compute_edges(states, topo, zero_conv<float>(4, 4, 3, 1));
  auto messages = aggregate_messages(states, edges, topo);
  for (int l = 0; l < 6; ++l) {
    auto expected = TensorF::zeros(shape);
    for (const auto& e : topo.edges) {
      if (e.dst != l) continue;
      for (std::size_t j = 0; j < expected.size(); ++j)
        expected.data()[j] += 0.5f * states[e.src].data()[j];
    }
    CHECK(oracles::max_abs_diff(messages[l], expected) < 1e-7);
  }
}

TEST_CASE("saturated gate passes the single in-neighbour through") {
  Rng rng(7);
  const Shape shape{1, 3, 4, 4};
  auto topo = GraphTopology::build(1);
  auto states = random_states<float>(2, shape, rng);
  auto sat = zero_conv<float>(3, 3, 3, 1);
  for (auto& b : sat.bias.data()) b = 20.0f;
  auto messages = aggregate_messages(states, compute_edges(states, topo, sat), topo);
  CHECK(oracles::max_abs_diff(messages[0], states[1]) < 1e-6);
  CHECK(oracles::max_abs_diff(messages[1], states[0]) < 1e-6);
}

TEST_CASE("message aggregation matches the per-edge oracle on random 6-node graphs") {
  Rng rng(8);
  auto topo = GraphTopology::build(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Shape shape{1, 3, 5, 5};
    auto states = random_states<double>(6, shape, rng);
    auto econv = Conv2d<double>::init(3, 3, 3, 1, 1, rng);
    auto edges = compute_edges(states, topo, econv);
    auto got = aggregate_messages(states, edges, topo);
    auto want = oracles::message_oracle(states, edges, topo);
    for (int l = 0; l < 6; ++l) CHECK(oracles::max_abs_diff(got[l], want[l]) < 1e-6);
  }
}

TEST_CASE("message sums are independent of edge enumeration order") {
  Rng rng(9);
  auto topo = GraphTopology::build(3);
  auto states = random_states<float>(6, {1, 4, 6, 6}, rng);
  auto econv = Conv2d<float>::init(4, 4, 3, 1, 1, rng);
  auto edges = compute_edges(states, topo, econv);
  auto base = aggregate_messages(states, edges, topo);

  GraphTopology shuffled = topo;
  std::vector<TensorF> shuffled_edges = edges;
  for (std::size_t i = shuffled.edges.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(shuffled.edges[i - 1], shuffled.edges[j]);
    std::swap(shuffled_edges[i - 1], shuffled_edges[j]);
  }
  auto permuted = aggregate_messages(states, shuffled_edges, shuffled);
  for (int l = 0; l < 6; ++l) CHECK(oracles::max_abs_diff(base[l], permuted[l]) < 1e-6);
}

TEST_CASE("gru gate extremes preserve or overwrite the state") {
  Rng rng(10);
  const int c = 3;
  const Shape shape{1, c, 5, 5};
  auto params = GrParams<float>::init(c, c, 1, c, rng);
  auto state = oracles::random_tensor<float>(shape, rng, 0.2, 1.0);
  auto message = oracles::random_tensor<float>(shape, rng, 0.2, 1.0);

  // closed update gate: z -> 0, state unchanged bit for bit
  params.gru_update = zero_conv<float>(2 * c, c, 3, 1);
  for (auto& b : params.gru_update.bias.data()) b = -30.0f;
  auto kept = gru_update(state, message, params);
  CHECK(kept.data() == state.data());

  // open update gate: z -> 1, state fully overwritten by the candidate
  for (auto& b : params.gru_update.bias.data()) b = 30.0f;
  auto overwritten = gru_update(state, message, params);
  auto r = sigmoid(params.gru_reset(concat_channels<float>({state, message})));
  auto candidate =
      casgnn::tanh(params.gru_candidate(concat_channels<float>({mul(r, state), message})));
  CHECK(oracles::max_abs_diff(overwritten, candidate) == 0.0);
}

TEST_CASE("gru matches the elementwise formula assembled from conv oracles") {
  Rng rng(11);
  const int c = 3;
  const Shape shape{1, c, 4, 4};
  auto params = GrParams<double>::init(c, c, 1, c, rng);
  auto state = oracles::random_tensor<double>(shape, rng);
  auto message = oracles::random_tensor<double>(shape, rng);
  auto got = gru_update(state, message, params);

  auto vm = concat_channels<double>({state, message});
  auto zpre = oracles::conv_oracle(vm, params.gru_update.weight, params.gru_update.bias, 1, 1);
  auto rpre = oracles::conv_oracle(vm, params.gru_reset.weight, params.gru_reset.bias, 1, 1);
  auto expected = TensorD::zeros(shape);
  auto rv = TensorD::zeros(shape);
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double r = 1.0 / (1.0 + std::exp(-rpre.data()[i]));
    rv.data()[i] = r * state.data()[i];
  }
  auto hpre = oracles::conv_oracle(concat_channels<double>({rv, message}),
                                   params.gru_candidate.weight, params.gru_candidate.bias, 1, 1);
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double z = 1.0 / (1.0 + std::exp(-zpre.data()[i]));
    const double h = std::tanh(hpre.data()[i]);
    expected.data()[i] = (1.0 - z) * state.data()[i] + z * h;
  }
  CHECK(oracles::max_abs_diff(got, expected) < 1e-6);
}

TEST_CASE("run_gr single-step single-scale equals the hand-unrolled pipeline") {
  Rng rng(12);
  const int c = 3;
  auto params = GrParams<float>::init(4, 4, 1, c, rng);
  auto feat_a = oracles::random_tensor<float>({1, 4, 8, 8}, rng, 0.0, 1.0);
  auto feat_g = oracles::random_tensor<float>({1, 4, 8, 8}, rng, 0.0, 1.0);
  const std::vector<int> scales = {4};

  auto out = run_gr(feat_a, feat_g, params, scales, 1);

  auto va = build_nodes(feat_a, params.proj_appearance, scales, 8, 8)[0];
  auto vg = build_nodes(feat_g, params.proj_geometry, scales, 8, 8)[0];
  auto e_ag = params.edge(sub(vg, va));  // edge appearance -> geometry
  auto e_ga = params.edge(sub(va, vg));
  auto va2 = gru_update(va, mul(sigmoid(e_ga), vg), params);
  auto vg2 = gru_update(vg, mul(sigmoid(e_ag), va), params);
  auto emb_a = params.merge_appearance(concat_channels<float>({bilinear_resize(va2, 8, 8)}));
  auto emb_g = params.merge_geometry(concat_channels<float>({bilinear_resize(vg2, 8, 8)}));

  CHECK(oracles::max_abs_diff(out.appearance, emb_a) < 1e-5);
  CHECK(oracles::max_abs_diff(out.geometry, emb_g) < 1e-5);
  CHECK(oracles::max_abs_diff(out.final_nodes[0], va2) < 1e-5);
  CHECK(oracles::max_abs_diff(out.final_nodes[1], vg2) < 1e-5);
}

TEST_CASE("zero guidance halves every post-update node per step") {
  Rng rng(13);
  const int c = 3, n = 2, iterations = 2;
  auto params = GrParams<float>::init(4, 4, n, c, rng);
  auto feat_a = oracles::random_tensor<float>({1, 4, 8, 8}, rng, 0.0, 1.0);
  auto feat_g = oracles::random_tensor<float>({1, 4, 8, 8}, rng, 0.0, 1.0);
  const std::vector<int> scales = {2, 4};

  GuidancePair<float> guidance;
  guidance.appearance = TensorF::zeros({1, c, 8, 8});
  guidance.geometry = TensorF::zeros({1, c, 8, 8});
  auto gated = run_gr(feat_a, feat_g, params, scales, iterations, &guidance);

  // manual unroll with each node halved after its update
  auto topo = GraphTopology::build(n);
  auto states = build_nodes(feat_a, params.proj_appearance, scales, 8, 8);
  auto geo = build_nodes(feat_g, params.proj_geometry, scales, 8, 8);
  states.insert(states.end(), geo.begin(), geo.end());
  auto half = TensorF::full({1, c, 8, 8}, 0.5f);
  for (int t = 0; t < iterations; ++t) {
    auto edges = compute_edges(states, topo, params.edge);
    auto messages = aggregate_messages(states, edges, topo);
    std::vector<TensorF> next(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
      next[i] = mul(gru_update(states[i], messages[i], params), half);
    }
    states = next;
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    CHECK(oracles::max_abs_diff(gated.final_nodes[i], states[i]) < 1e-6);
  }
}

TEST_CASE("state preservation holds across full run_gr iterations") {
  Rng rng(14);
  const int c = 3, n = 2;
  auto params = GrParams<float>::init(4, 4, n, c, rng);
  params.gru_update = zero_conv<float>(2 * c, c, 3, 1);
  for (auto& b : params.gru_update.bias.data()) b = -30.0f;

  auto feat_a = oracles::random_tensor<float>({1, 4, 8, 8}, rng, 0.2, 1.0);
  auto feat_g = oracles::random_tensor<float>({1, 4, 8, 8}, rng, 0.2, 1.0);
  const std::vector<int> scales = {2, 4};
  auto out = run_gr(feat_a, feat_g, params, scales, 3);

  auto initial = build_nodes(feat_a, params.proj_appearance, scales, 8, 8);
  auto geo = build_nodes(feat_g, params.proj_geometry, scales, 8, 8);
  initial.insert(initial.end(), geo.begin(), geo.end());
  for (std::size_t i = 0; i < initial.size(); ++i) {
    CHECK(out.final_nodes[i].data() == initial[i].data());
  }
}

TEST_CASE("run_gr and readout shape contracts") {
  Rng rng(15);
  const int c = 16;
  auto params = GrParams<float>::init(8, 8, 3, c, rng);
  auto feat_a = oracles::random_tensor<float>({1, 8, 16, 16}, rng);
  auto feat_g = oracles::random_tensor<float>({1, 8, 16, 16}, rng);
  auto out = run_gr(feat_a, feat_g, params, {2, 4, 8}, 3);
  CHECK(out.appearance.shape() == Shape{1, c, 16, 16});
  CHECK(out.geometry.shape() == Shape{1, c, 16, 16});

  auto ro = ReadoutParams<float>::init(c, rng);
  auto logits = readout(out.appearance, out.geometry, ro, 64, 64);
  CHECK(logits.shape() == Shape{1, 1, 64, 64});

  CHECK_THROWS_AS(run_gr(feat_a, feat_g, params, {2, 4, 8}, 0), ConfigError);
}

TEST_CASE("readout zero path and composition oracle") {
  Rng rng(16);
  const int c = 4;
  ReadoutParams<float> zero_ro;
  zero_ro.first = zero_conv<float>(2 * c, c, 1, 0);
  zero_ro.second = zero_conv<float>(c, 1, 1, 0);
  auto emb = oracles::random_tensor<float>({1, c, 6, 6}, rng);
  auto logits = readout(emb, emb, zero_ro, 12, 12);
  for (float v : logits.data()) CHECK(v == 0.0f);
  auto prob = sigmoid(logits);
  for (float v : prob.data()) CHECK(v == doctest::Approx(0.5f));

  Rng drng(17);
  auto ro = ReadoutParams<double>::init(c, drng);
  auto ea = oracles::random_tensor<double>({1, c, 6, 6}, drng);
  auto eg = oracles::random_tensor<double>({1, c, 6, 6}, drng);
  auto got = readout(ea, eg, ro, 9, 9);
  auto fused = oracles::conv_oracle(concat_channels<double>({ea, eg}), ro.first.weight,
                                    ro.first.bias, 1, 0);
  auto second = oracles::conv_oracle(fused, ro.second.weight, ro.second.bias, 1, 0);
  CHECK(oracles::max_abs_diff(got, oracles::resize_oracle(second, 9, 9)) < 1e-6);
}
