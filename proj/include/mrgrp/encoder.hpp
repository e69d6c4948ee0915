#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mrgrp/errors.hpp"
#include "mrgrp/graph.hpp"
#include "mrgrp/nn.hpp"
#include "mrgrp/random.hpp"
#include "mrgrp/tensor.hpp"

namespace mrgrp {

struct EncoderConfig {
  std::size_t d_v = 32;
  std::size_t d_h = 64;
  std::size_t d_e = 64;
  std::size_t heads = 4;
  std::size_t layers = 3;
  bool residual = true;
  std::size_t fm_factor = 8;
  std::size_t deep_hidden = 32;
  std::size_t deep_out = 16;

  void validate() const {
    if (d_v == 0 || d_h == 0 || d_e == 0 || heads == 0 || fm_factor == 0 || deep_hidden == 0 || deep_out == 0)
      throw ConfigError("encoder dimensions must be positive");
    if (d_h != d_e) throw ConfigError("encoder requires d_h == d_e (got " + std::to_string(d_h) + " and " +
                                      std::to_string(d_e) + ")");
    if (d_e % heads != 0) throw ConfigError("d_e must be divisible by heads");
  }

  std::size_t head_dim() const { return d_e / heads; }
};

/// Edge features are divided by these before the initial relation map.
inline constexpr double kEdgeDistanceScaleM = 1000.0;
inline constexpr double kEdgeTimeScaleS = 1800.0;

inline constexpr std::size_t kDeepFmFields = kNodeCategoricalWidth + kNodeNumericWidth;

struct DeepFmParams {
  std::array<Tensor, kNodeCategoricalWidth> cat_first;  // cardinality x 1
  std::array<Tensor, kNodeCategoricalWidth> cat_embed;  // cardinality x k
  Tensor num_first;                                     // numeric width x 1
  Tensor num_embed;                                     // numeric width x k
  Linear deep_hidden;
  Linear deep_out;
  Linear output;  // [first | fm | deep] -> d_v
};

struct AttentionParams {
  std::vector<Tensor> wq, wk, wv;  // per head, d_in x head_dim
  Tensor wm;                       // heads*head_dim x d_e
  LayerNormParams norm;
};

struct MrgcParams {
  std::array<Tensor, kRelationCount> w_r;  // d_h x d_h
  Tensor w_rel;                            // d_h x d_h
  LayerNormParams norm;
};

struct EncoderParams {
  EncoderConfig cfg;
  DeepFmParams deepfm;
  Linear projection;
  std::array<Linear, kRelationCount> relation_init;
  std::vector<AttentionParams> attention;
  std::vector<MrgcParams> mrgc;
  AttentionParams final_attention;

  static EncoderParams make(ParameterStore& ps, const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams p;
    p.cfg = cfg;
    const std::size_t k = cfg.fm_factor;
    for (std::size_t f = 0; f < kNodeCategoricalWidth; ++f) {
      const auto card = static_cast<std::size_t>(kCategoricalCardinality[f]);
      const std::string base = std::string("enc.deepfm.") + kCategoricalNames[f];
      p.deepfm.cat_first[f] = ps.xavier(base + ".first", card, 1, rng);
      p.deepfm.cat_embed[f] = ps.xavier(base + ".embed", card, k, rng);
    }
    p.deepfm.num_first = ps.xavier("enc.deepfm.numeric.first", kNodeNumericWidth, 1, rng);
    p.deepfm.num_embed = ps.xavier("enc.deepfm.numeric.embed", kNodeNumericWidth, k, rng);
    p.deepfm.deep_hidden = Linear::make(ps, "enc.deepfm.deep1", kDeepFmFields * k, cfg.deep_hidden, rng);
    p.deepfm.deep_out = Linear::make(ps, "enc.deepfm.deep2", cfg.deep_hidden, cfg.deep_out, rng);
    p.deepfm.output = Linear::make(ps, "enc.deepfm.out", 1 + k + cfg.deep_out, cfg.d_v, rng);
    p.projection = Linear::make(ps, "enc.proj", cfg.d_v, cfg.d_h, rng);
    for (RelationKind r : kAllRelations) {
      p.relation_init[relation_index(r)] =
          Linear::make(ps, std::string("enc.rel_init.") + relation_name(r), edge_feature_width(r), cfg.d_h, rng);
    }
    auto make_attention = [&](const std::string& name) {
      AttentionParams a;
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::string hn = name + ".h" + std::to_string(h);
        a.wq.push_back(ps.xavier(hn + ".wq", cfg.d_h, cfg.head_dim(), rng));
        a.wk.push_back(ps.xavier(hn + ".wk", cfg.d_h, cfg.head_dim(), rng));
        a.wv.push_back(ps.xavier(hn + ".wv", cfg.d_h, cfg.head_dim(), rng));
      }
      a.wm = ps.xavier(name + ".wm", cfg.heads * cfg.head_dim(), cfg.d_e, rng);
      a.norm = LayerNormParams::make(ps, name + ".ln", cfg.d_e);
      return a;
    };
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string ln = "enc.layer" + std::to_string(l);
      p.attention.push_back(make_attention(ln + ".attn"));
      MrgcParams m;
      for (RelationKind r : kAllRelations)
        m.w_r[relation_index(r)] = ps.xavier(ln + ".mrgc.w_" + relation_name(r), cfg.d_h, cfg.d_h, rng);
      m.w_rel = ps.xavier(ln + ".mrgc.w_rel", cfg.d_h, cfg.d_h, rng);
      m.norm = LayerNormParams::make(ps, ln + ".mrgc.ln", cfg.d_h);
      p.mrgc.push_back(std::move(m));
    }
    p.final_attention = make_attention("enc.final_attn");
    return p;
  }
};

/// Per-edge relation embeddings, one matrix per relation with rows in the
/// order of MultiRelGraph::edges(r).
using RelationEmbeddings = std::array<Tensor, kRelationCount>;

struct EncodedTasks {
  Tensor H;              // n x d_e
  RelationEmbeddings Q;  // per relation: edge count x d_h (undefined when a relation has no edges)
};

/// 0.5 * ((sum e)^2 - sum e^2) over field embeddings, all rows x k.
inline Tensor fm_interaction(Tape& tape, const std::vector<Tensor>& fields) {
  if (fields.empty()) throw DimensionError("fm_interaction needs at least one field");
  Tensor s = fields[0];
  Tensor sq = tape.mul(fields[0], fields[0]);
  for (std::size_t f = 1; f < fields.size(); ++f) {
    s = tape.add(s, fields[f]);
    sq = tape.add(sq, tape.mul(fields[f], fields[f]));
  }
  return tape.scale(tape.sub(tape.mul(s, s), sq), 0.5);
}

/// DeepFM node encoding for all n rows at once: n x d_v.
inline Tensor deepfm_encode(Tape& tape, const NodeFeatures& feats, const DeepFmParams& p) {
  const std::size_t n = feats.categorical.size();
  if (feats.numerical.size() != n * kNodeNumericWidth)
    throw DimensionError("deepfm_encode: numerical block has " + std::to_string(feats.numerical.size()) +
                         " values for " + std::to_string(n) + " rows");
  std::vector<Tensor> fields;
  Tensor first;
  for (std::size_t f = 0; f < kNodeCategoricalWidth; ++f) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int code = feats.categorical[i][f];
      if (code < 0 || code >= kCategoricalCardinality[f]) {
        throw FeatureError(std::string("categorical field '") + kCategoricalNames[f] + "' code " +
                           std::to_string(code) + " outside [0, " + std::to_string(kCategoricalCardinality[f]) +
                           ")");
      }
      idx[i] = static_cast<std::size_t>(code);
    }
    fields.push_back(tape.gather_rows(p.cat_embed[f], idx));
    auto term = tape.gather_rows(p.cat_first[f], std::move(idx));
    first = first.defined() ? tape.add(first, term) : term;
  }
  const Tensor x = tape.constant({n, kNodeNumericWidth}, feats.numerical);
  first = tape.add(first, tape.matmul(x, p.num_first));
  for (std::size_t j = 0; j < kNodeNumericWidth; ++j) {
    // Numerical field j: its factor vector scaled by the value.
    auto col = tape.slice_cols(x, j, 1);
    fields.push_back(tape.matmul(col, tape.row(p.num_embed, j)));
  }
  auto fm = fm_interaction(tape, fields);
  auto deep = p.deep_out(tape, tape.gelu(p.deep_hidden(tape, tape.concat_cols(fields))));
  return p.output(tape, tape.concat_cols({first, fm, deep}));
}

/// GeLU(x W_v + b_v).
inline Tensor project_node(Tape& tape, const Tensor& x, const Linear& projection) {
  return tape.gelu(projection(tape, x));
}

/// Multi-head self-attention without positional encoding. When `weights` is
/// given, each head's n x n attention matrix is appended to it.
inline Tensor attention_layer(Tape& tape, const Tensor& h_in, const AttentionParams& p,
                              std::vector<Tensor>* weights = nullptr) {
  const std::size_t heads = p.wq.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.wq.front().cols()));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto q = tape.matmul(h_in, p.wq[h]);
    auto k = tape.matmul(h_in, p.wk[h]);
    auto v = tape.matmul(h_in, p.wv[h]);
    auto a = tape.softmax_rows(tape.scale(tape.matmul(q, tape.transpose(k)), scale));
    if (weights) weights->push_back(a);
    outs.push_back(tape.matmul(a, v));
  }
  return tape.matmul(heads == 1 ? outs.front() : tape.concat_cols(outs), p.wm);
}

/// H_T + GeLU(sum over relations of (sum over incident edges h_u * q_uv) W_r).
/// Pickup-then-delivery edges carry messages both ways. Without `residual`
/// the H_T term is dropped.
inline Tensor mrgc_layer(Tape& tape, const Tensor& h_t, const MultiRelGraph& g, const RelationEmbeddings& q,
                         const MrgcParams& p, bool residual = true) {
  const std::size_t n = h_t.rows();
  Tensor total;
  for (RelationKind r : kAllRelations) {
    const auto ri = relation_index(r);
    const auto& edges = g.edges(r);
    if (edges.empty()) continue;
    if (!q[ri].defined() || q[ri].rows() != edges.size())
      throw DimensionError(std::string("mrgc_layer: relation embeddings missing for ") + relation_name(r));
    std::vector<std::size_t> src, dst, qrow;
    std::size_t e = 0;
    for (const auto& [key, _] : edges) {
      src.push_back(static_cast<std::size_t>(key.first));
      dst.push_back(static_cast<std::size_t>(key.second));
      qrow.push_back(e);
      if (r == RelationKind::PickupThenDelivery) {
        src.push_back(static_cast<std::size_t>(key.second));
        dst.push_back(static_cast<std::size_t>(key.first));
        qrow.push_back(e);
      }
      ++e;
    }
    auto msg = tape.mul(tape.gather_rows(h_t, std::move(src)), tape.gather_rows(q[ri], std::move(qrow)));
    auto agg = tape.matmul(tape.scatter_add_rows(msg, std::move(dst), n), p.w_r[ri]);
    total = total.defined() ? tape.add(total, agg) : agg;
  }
  if (!total.defined()) return residual ? h_t : tape.scale(h_t, 0.0);
  return residual ? tape.add(h_t, tape.gelu(total)) : tape.gelu(total);
}

/// q' = q W_rel for every relation.
inline RelationEmbeddings update_relation_embeddings(Tape& tape, const RelationEmbeddings& q, const Tensor& w_rel) {
  RelationEmbeddings out;
  for (std::size_t r = 0; r < kRelationCount; ++r)
    if (q[r].defined()) out[r] = tape.matmul(q[r], w_rel);
  return out;
}

/// Initial per-edge relation embeddings from scaled edge features.
inline RelationEmbeddings initial_relation_embeddings(Tape& tape, const MultiRelGraph& g, const EncoderParams& p) {
  RelationEmbeddings q;
  for (RelationKind r : kAllRelations) {
    const auto& edges = g.edges(r);
    if (edges.empty()) continue;
    const std::size_t w = edge_feature_width(r);
    std::vector<double> z;
    z.reserve(edges.size() * w);
    for (const auto& [_, f] : edges) {
      // Widths: distance first, then time difference when present.
      if (r == RelationKind::SpatialProx) {
        z.push_back(f[0] / kEdgeDistanceScaleM);
      } else if (r == RelationKind::PickupThenDelivery) {
        z.push_back(f[0] / kEdgeDistanceScaleM);
        z.push_back(f[1] / kEdgeTimeScaleS);
      } else {
        z.push_back(f[0] / kEdgeTimeScaleS);
      }
    }
    q[relation_index(r)] = p.relation_init[relation_index(r)](tape, tape.constant({edges.size(), w}, std::move(z)));
  }
  return q;
}

inline Tensor residual_norm(Tape& tape, const Tensor& x, const Tensor& sub, const LayerNormParams& ln,
                            bool residual) {
  return residual ? ln(tape, tape.add(x, sub)) : sub;
}

inline EncodedTasks encode(Tape& tape, const MultiRelGraph& g, const EncoderParams& p) {
  if (g.n == 0) throw DimensionError("encode: empty graph");
  auto h = project_node(tape, deepfm_encode(tape, g.features, p.deepfm), p.projection);
  auto q = initial_relation_embeddings(tape, g, p);
  for (std::size_t l = 0; l < p.attention.size(); ++l) {
    h = residual_norm(tape, h, attention_layer(tape, h, p.attention[l]), p.attention[l].norm, p.cfg.residual);
    auto hg = mrgc_layer(tape, h, g, q, p.mrgc[l], p.cfg.residual);
    h = p.cfg.residual ? p.mrgc[l].norm(tape, hg) : hg;
    q = update_relation_embeddings(tape, q, p.mrgc[l].w_rel);
  }
  h = residual_norm(tape, h, attention_layer(tape, h, p.final_attention), p.final_attention.norm, p.cfg.residual);
  return {h, q};
}

}  // namespace mrgrp
