#pragma once

#include <optional>
#include <string>
#include <vector>

#include "casgnn/backbone.hpp"
#include "casgnn/errors.hpp"
#include "casgnn/nn.hpp"
#include "casgnn/ops.hpp"
#include "casgnn/tensor.hpp"

namespace casgnn {

struct GraphNodeTag {
  Modality modality = Modality::appearance;
  int scale_index = 0;
};

struct GraphEdge {
  int src = 0;
  int dst = 0;
};

/// Node and edge layout of one reasoning graph: n multi-scale nodes per
/// modality, a directed edge for every ordered pair of distinct nodes within
/// a modality, and cross-modality edges (both directions) exactly between
/// nodes of equal scale index. Appearance nodes occupy indices [0, n),
/// geometry nodes [n, 2n).
struct GraphTopology {
  int scales_per_modality = 0;
  std::vector<GraphNodeTag> nodes;
  std::vector<GraphEdge> edges;

  static GraphTopology build(int n) {
    if (n < 1) throw ConfigError("graph needs at least one scale per modality");
    GraphTopology topo;
    topo.scales_per_modality = n;
    for (int i = 0; i < n; ++i) topo.nodes.push_back({Modality::appearance, i});
    for (int i = 0; i < n; ++i) topo.nodes.push_back({Modality::geometry, i});
    for (int base : {0, n}) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i != j) topo.edges.push_back({base + i, base + j});
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      topo.edges.push_back({i, n + i});
      topo.edges.push_back({n + i, i});
    }
    return topo;
  }

  int node_count() const { return static_cast<int>(nodes.size()); }
};

/// Parameters of one GR module. The edge-relation conv and the ConvGRU cell
/// are shared across all edges/nodes of both modalities; modality
/// specialisation lives in the per-scale projection convs and the merge
/// convs.
template <class S>
struct GrParams {
  std::vector<Conv2d<S>> proj_appearance;  // 1x1, feature channels -> c, one per scale
  std::vector<Conv2d<S>> proj_geometry;
  Conv2d<S> edge;           // 3x3, c -> c
  Conv2d<S> gru_update;     // 3x3, 2c -> c  (z gate)
  Conv2d<S> gru_reset;      // 3x3, 2c -> c  (r gate)
  Conv2d<S> gru_candidate;  // 3x3, 2c -> c
  Conv2d<S> merge_appearance;  // 3x3, n*c -> c
  Conv2d<S> merge_geometry;

  static GrParams init(int feat_c_appearance, int feat_c_geometry, int n, int c, Rng& rng) {
    GrParams p;
    for (int i = 0; i < n; ++i) {
      p.proj_appearance.push_back(Conv2d<S>::init(feat_c_appearance, c, 1, 1, 0, rng));
    }
    for (int i = 0; i < n; ++i) {
      p.proj_geometry.push_back(Conv2d<S>::init(feat_c_geometry, c, 1, 1, 0, rng));
    }
    p.edge = Conv2d<S>::init(c, c, 3, 1, 1, rng);
    p.gru_update = Conv2d<S>::init(2 * c, c, 3, 1, 1, rng);
    p.gru_reset = Conv2d<S>::init(2 * c, c, 3, 1, 1, rng);
    p.gru_candidate = Conv2d<S>::init(2 * c, c, 3, 1, 1, rng);
    p.merge_appearance = Conv2d<S>::init(n * c, c, 3, 1, 1, rng);
    p.merge_geometry = Conv2d<S>::init(n * c, c, 3, 1, 1, rng);
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < proj_appearance.size(); ++i)
      proj_appearance[i].visit(prefix + ".proj_app" + std::to_string(i), f);
    for (std::size_t i = 0; i < proj_geometry.size(); ++i)
      proj_geometry[i].visit(prefix + ".proj_geo" + std::to_string(i), f);
    edge.visit(prefix + ".edge", f);
    gru_update.visit(prefix + ".gru_z", f);
    gru_reset.visit(prefix + ".gru_r", f);
    gru_candidate.visit(prefix + ".gru_h", f);
    merge_appearance.visit(prefix + ".merge_app", f);
    merge_geometry.visit(prefix + ".merge_geo", f);
  }
};

/// Fixed guidance embeddings coarsened from the preceding (deeper) graph.
/// They gate this graph's nodes but are never updated by message passing.
template <class S>
struct GuidancePair {
  Tensor<S> appearance;
  Tensor<S> geometry;
  int source_level = -1;
};

/// Channel attention vector for guidance gating: sigmoid of the per-channel
/// global average, values strictly inside (0,1).
template <class S>
Tensor<S> guidance_attention(const Tensor<S>& guidance) {
  return sigmoid(global_avg_pool(guidance));
}

/// Multi-scale node embeddings for one modality:
/// node_i = resize(conv1x1(adaptive_avg_pool(feature, s_i, s_i)), h, w).
template <class S>
std::vector<Tensor<S>> build_nodes(const Tensor<S>& feature,
                                   const std::vector<Conv2d<S>>& proj,
                                   const std::vector<int>& scales, int target_h,
                                   int target_w) {
  if (proj.size() != scales.size()) {
    throw ConfigError("node projection count " + std::to_string(proj.size()) +
                      " does not match scale count " + std::to_string(scales.size()));
  }
  const Shape& fs = feature.shape();
  std::vector<Tensor<S>> nodes;
  nodes.reserve(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const int s = scales[i];
    if (s < 1 || s > fs.h || s > fs.w) {
      throw ConfigError("pyramid scale " + std::to_string(s) + " exceeds feature extent " +
                        fs.str());
    }
    Tensor<S> pooled = adaptive_avg_pool(feature, s, s);
    Tensor<S> projected = proj[i](pooled);
    nodes.push_back(bilinear_resize(projected, target_h, target_w));
  }
  return nodes;
}

/// Edge embeddings e_{k,l} = conv3x3(v_l - v_k), recomputed from the current
/// node states with weights shared across all edges and iterations. Returned
/// in topology edge order.
///
/// The conv is linear, so conv(v_l - v_k) = conv(v_l) - conv(v_k) + bias;
/// one convolution per node serves every incident edge.
template <class S>
std::vector<Tensor<S>> compute_edges(const std::vector<Tensor<S>>& states,
                                     const GraphTopology& topology,
                                     const Conv2d<S>& edge_conv) {
  const Shape& ss = states[0].shape();
  const Tensor<S> zero_bias = Tensor<S>::zeros({1, edge_conv.weight.shape().n, 1, 1});
  const Tensor<S> ones = Tensor<S>::full({ss.n, edge_conv.weight.shape().n, ss.h, ss.w}, S(1));
  Tensor<S> bias_map = scale_channels(ones, edge_conv.bias);

  std::vector<Tensor<S>> per_node;
  per_node.reserve(states.size());
  for (const Tensor<S>& v : states) {
    per_node.push_back(
        conv2d(v, edge_conv.weight, zero_bias, edge_conv.stride, edge_conv.padding));
  }
  std::vector<Tensor<S>> edges;
  edges.reserve(topology.edges.size());
  for (const GraphEdge& e : topology.edges) {
    edges.push_back(add(sub(per_node[e.dst], per_node[e.src]), bias_map));
  }
  return edges;
}

/// Per-node aggregated message m_l = sum over in-neighbours k of
/// sigmoid(e_{k,l}) * v_k (elementwise product).
template <class S>
std::vector<Tensor<S>> aggregate_messages(const std::vector<Tensor<S>>& states,
                                          const std::vector<Tensor<S>>& edges,
                                          const GraphTopology& topology) {
  std::vector<Tensor<S>> messages(states.size());
  for (std::size_t i = 0; i < topology.edges.size(); ++i) {
    const GraphEdge& e = topology.edges[i];
    Tensor<S> term = mul(sigmoid(edges[i]), states[e.src]);
    messages[e.dst] = messages[e.dst].defined() ? add(messages[e.dst], term) : term;
  }
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (!messages[i].defined()) {
      throw UsageError("graph node " + std::to_string(i) + " has no in-neighbours");
    }
  }
  return messages;
}

/// ConvGRU node update, applied once per node per iteration:
///   z = sigmoid(conv_z([v, m]))
///   r = sigmoid(conv_r([v, m]))
///   h = tanh(conv_h([r * v, m]))
///   v' = (1 - z) * v + z * h
template <class S>
Tensor<S> gru_update(const Tensor<S>& state, const Tensor<S>& message,
                     const GrParams<S>& params) {
  Tensor<S> vm = concat_channels<S>({state, message});
  Tensor<S> z = sigmoid(params.gru_update(vm));
  Tensor<S> r = sigmoid(params.gru_reset(vm));
  Tensor<S> candidate = casgnn::tanh(params.gru_candidate(concat_channels<S>({mul(r, state), message})));
  // (1 - z) * v + z * h  ==  v - z*v + z*h
  return add(sub(state, mul(z, state)), mul(z, candidate));
}

template <class S>
struct GrOutput {
  Tensor<S> appearance;               // merged appearance embedding
  Tensor<S> geometry;                 // merged geometry embedding
  std::vector<Tensor<S>> final_nodes; // node states after T iterations
};

/// Full GR pass over one pyramid level: build nodes, run T rounds of
/// edge-gated message passing with ConvGRU updates, then merge each
/// modality's node maps (resize, concat, 3x3 conv).
///
/// When guidance is attached, every node is channel-gated after each update
/// by its own modality's attention vector; the guidance embeddings stay
/// fixed throughout.
template <class S>
GrOutput<S> run_gr(const Tensor<S>& feat_appearance, const Tensor<S>& feat_geometry,
                   const GrParams<S>& params, const std::vector<int>& scales, int iterations,
                   const GuidancePair<S>* guidance = nullptr) {
  if (iterations < 1) {
    throw ConfigError("message passing needs at least one iteration, got " +
                      std::to_string(iterations));
  }
  const Shape& fa = feat_appearance.shape();
  const Shape& fg = feat_geometry.shape();
  if (fa.n != fg.n || fa.h != fg.h || fa.w != fg.w) {
    throw DimensionError("modality features disagree: " + fa.str() + " vs " + fg.str());
  }
  const int n = static_cast<int>(scales.size());
  const int h = fa.h, w = fa.w;
  GraphTopology topology = GraphTopology::build(n);

  std::vector<Tensor<S>> states =
      build_nodes(feat_appearance, params.proj_appearance, scales, h, w);
  {
    std::vector<Tensor<S>> geo = build_nodes(feat_geometry, params.proj_geometry, scales, h, w);
    states.insert(states.end(), geo.begin(), geo.end());
  }

  Tensor<S> gate_appearance, gate_geometry;
  if (guidance != nullptr) {
    gate_appearance = guidance_attention(guidance->appearance);
    gate_geometry = guidance_attention(guidance->geometry);
  }

  for (int t = 0; t < iterations; ++t) {
    std::vector<Tensor<S>> edges = compute_edges(states, topology, params.edge);
    std::vector<Tensor<S>> messages = aggregate_messages(states, edges, topology);
    std::vector<Tensor<S>> next(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
      next[i] = gru_update(states[i], messages[i], params);
      if (guidance != nullptr) {
        const Tensor<S>& gate =
            topology.nodes[i].modality == Modality::appearance ? gate_appearance : gate_geometry;
        next[i] = scale_channels(next[i], gate);
      }
    }
    states = std::move(next);
  }

  const auto merge = [&](int base, const Conv2d<S>& conv) {
    std::vector<Tensor<S>> resized;
    resized.reserve(n);
    for (int i = 0; i < n; ++i) resized.push_back(bilinear_resize(states[base + i], h, w));
    return conv(concat_channels(std::span<const Tensor<S>>(resized)));
  };

  GrOutput<S> out;
  out.appearance = merge(0, params.merge_appearance);
  out.geometry = merge(n, params.merge_geometry);
  out.final_nodes = std::move(states);
  return out;
}

/// Saliency readout: two 1x1 convs over the concatenated modality embeddings,
/// then bilinear resize to the requested output size. Produces logits; the
/// probability map is sigmoid(logits) downstream.
template <class S>
struct ReadoutParams {
  Conv2d<S> first;   // 1x1, 2c -> c
  Conv2d<S> second;  // 1x1, c -> 1

  static ReadoutParams init(int c, Rng& rng) {
    ReadoutParams p;
    p.first = Conv2d<S>::init(2 * c, c, 1, 1, 0, rng);
    p.second = Conv2d<S>::init(c, 1, 1, 1, 0, rng);
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    first.visit(prefix + ".first", f);
    second.visit(prefix + ".second", f);
  }
};

template <class S>
Tensor<S> readout(const Tensor<S>& emb_appearance, const Tensor<S>& emb_geometry,
                  const ReadoutParams<S>& params, int out_h, int out_w) {
  if (!(emb_appearance.shape() == emb_geometry.shape())) {
    throw DimensionError("readout embeddings disagree: " + emb_appearance.shape().str() +
                         " vs " + emb_geometry.shape().str());
  }
  Tensor<S> fused = params.second(params.first(concat_channels<S>({emb_appearance, emb_geometry})));
  return bilinear_resize(fused, out_h, out_w);
}

}  // namespace casgnn
