#include "ivfuse/model.hpp"

#include <numeric>

#include "ivfuse/errors.hpp"

namespace ivfuse {

using nn::Value;

MitEncoder MitEncoder::make(const std::string& key, int channels,
                            int rdb_layers, int rdb_growth) {
  MitEncoder e;
  e.shallow = ShallowExtract::make(key + ".shallow", 2, channels);
  e.rdb = ResidualDenseBlock::make(key + ".rdb", channels, rdb_layers,
                                   rdb_growth);
  return e;
}

void MitEncoder::init(ParamTree& tree, Rng& rng) const {
  shallow.init(tree, rng);
  rdb.init(tree, rng);
}

Value MitEncoder::forward(const ParamTree& tree, const Value& dual) const {
  require(dual.val().rank() == 3 && dual.val().shape[0] == 2,
          "encode: expected a 2-channel dual input");
  return rdb.forward(tree, shallow.forward(tree, dual));
}

MutualTransfer MutualTransfer::make(const std::string& key, int channels) {
  MutualTransfer m;
  m.proj_ir = AttentionProjector::make(key + ".proj_ir", channels);
  m.proj_vis = AttentionProjector::make(key + ".proj_vis", channels);
  m.enh_ir = EnhanceResidual::make(key + ".enh_ir", channels);
  m.enh_vis = EnhanceResidual::make(key + ".enh_vis", channels);
  return m;
}

void MutualTransfer::init(ParamTree& tree, Rng& rng) const {
  proj_ir.init(tree, rng);
  proj_vis.init(tree, rng);
  enh_ir.init(tree, rng);
  enh_vis.init(tree, rng);
}

MitOutputs MutualTransfer::forward(const ParamTree& tree, const Value& f_ir,
                                   const Value& f_vis) const {
  check_same_shape(f_ir.val(), f_vis.val(), "mutual_transfer");
  // Same-modality Q·Kᵀ applied to the other modality's V: the infrared
  // affinity decides how visible channels blend, and vice versa.
  Value att_vis2ir = channel_attention(tree, proj_ir.wq, proj_ir.wk,
                                       proj_vis.wv, f_ir, f_ir, f_vis);
  Value att_ir2vis = channel_attention(tree, proj_vis.wq, proj_vis.wk,
                                       proj_ir.wv, f_vis, f_vis, f_ir);
  MitOutputs out;
  out.f_ir = f_ir;
  out.f_vis = f_vis;
  out.f_vis2ir = enh_ir.forward(tree, att_vis2ir, f_ir);
  out.f_ir2vis = enh_vis.forward(tree, att_ir2vis, f_vis);
  return out;
}

ChannelPermutation ChannelPermutation::random(int channels, Rng& rng) {
  ChannelPermutation p;
  p.perm.resize(static_cast<size_t>(channels));
  std::iota(p.perm.begin(), p.perm.end(), 0);
  for (int i = channels - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(i) + 1));
    std::swap(p.perm[i], p.perm[j]);
  }
  p.validate(channels);
  return p;
}

ChannelPermutation ChannelPermutation::identity(int channels) {
  ChannelPermutation p;
  p.perm.resize(static_cast<size_t>(channels));
  std::iota(p.perm.begin(), p.perm.end(), 0);
  p.validate(channels);
  return p;
}

void ChannelPermutation::validate(int channels) const {
  require(channels > 0 && channels % 2 == 0,
          "channel shuffle requires an even channel count");
  require(static_cast<int>(perm.size()) == channels,
          "channel shuffle length mismatch");
  std::vector<bool> seen(static_cast<size_t>(channels), false);
  for (int v : perm) {
    require(v >= 0 && v < channels && !seen[static_cast<size_t>(v)],
            "channel shuffle is not a bijection");
    seen[static_cast<size_t>(v)] = true;
  }
}

std::pair<Value, Value> shuffle_split(const Value& f,
                                      const ChannelPermutation& perm) {
  const int c = f.val().shape[0];
  perm.validate(c);
  Value shuffled = nn::permute_channels(f, perm.perm);
  return {nn::slice_channels(shuffled, 0, c / 2),
          nn::slice_channels(shuffled, c / 2, c / 2)};
}

Siphia Siphia::make(const std::string& key, int channels) {
  require(channels % 2 == 0, "siphia: channel count must be even");
  const int half = channels / 2;
  Siphia s;
  s.channels = channels;
  s.d1rec = ConvTanhDecoder::make(key + ".d1rec", half);
  s.d2rec = ConvTanhDecoder::make(key + ".d2rec", half);
  s.proj1 = AttentionProjector::make(key + ".proj1", half);
  s.proj2 = AttentionProjector::make(key + ".proj2", half);
  s.enh21 = EnhanceResidual::make(key + ".enh21", half);
  s.enh12 = EnhanceResidual::make(key + ".enh12", half);
  s.e1ed = Conv2dBlock{key + ".e1ed", half, half, 3};
  s.e2ed = Conv2dBlock{key + ".e2ed", half, half, 3};
  s.d1ed = ConvTanhDecoder::make(key + ".d1ed", half);
  s.d2ed = ConvTanhDecoder::make(key + ".d2ed", half);
  s.den = ConvTanhDecoder::make(key + ".den", channels);
  return s;
}

void Siphia::init(ParamTree& tree, Rng& rng) {
  perm = ChannelPermutation::random(channels, rng);
  d1rec.init(tree, rng);
  d2rec.init(tree, rng);
  proj1.init(tree, rng);
  proj2.init(tree, rng);
  enh21.init(tree, rng);
  enh12.init(tree, rng);
  e1ed.init(tree, rng);
  e2ed.init(tree, rng);
  d1ed.init(tree, rng);
  d2ed.init(tree, rng);
  den.init(tree, rng);
}

std::pair<Value, Value> Siphia::hiassi_reconstruct(const ParamTree& tree,
                                                   const Value& grp1,
                                                   const Value& grp2) const {
  return {d1rec.forward(tree, grp1), d2rec.forward(tree, grp2)};
}

std::pair<Value, Value> Siphia::sip_enhance(const ParamTree& tree,
                                            const Value& grp1,
                                            const Value& grp2) const {
  check_same_shape(grp1.val(), grp2.val(), "sip_enhance");
  // Q from one group's projector against the other group's K and V.
  Value att21 = channel_attention(tree, proj2.wq, proj1.wk, proj1.wv, grp2,
                                  grp1, grp1);
  Value att12 = channel_attention(tree, proj1.wq, proj2.wk, proj2.wv, grp1,
                                  grp2, grp2);
  return {enh21.forward(tree, att21, grp1), enh12.forward(tree, att12, grp2)};
}

std::tuple<Value, Value, Value, Value> Siphia::sip_edge(
    const ParamTree& tree, const Value& en21, const Value& en12) const {
  Value ed21 = nn::tanh_op(e1ed.forward(tree, en21));
  Value ed12 = nn::tanh_op(e2ed.forward(tree, en12));
  return {ed21, ed12, d1ed.forward(tree, ed21), d2ed.forward(tree, ed12)};
}

SiphiaOutputs Siphia::forward(const ParamTree& tree,
                              const Value& f_transferred) const {
  require(f_transferred.val().shape[0] == channels,
          "siphia_forward: channel mismatch");
  auto [grp1, grp2] = shuffle_split(f_transferred, perm);
  SiphiaOutputs out;
  std::tie(out.rec1, out.rec2) = hiassi_reconstruct(tree, grp1, grp2);
  auto [en21, en12] = sip_enhance(tree, grp1, grp2);
  auto [ed21, ed12, edge1, edge2] = sip_edge(tree, en21, en12);
  out.edge1 = edge1;
  out.edge2 = edge2;
  out.f_ed = nn::concat_channels({ed12, ed21});  // grp1<-grp2 group first
  out.f_en = nn::concat_channels({en12, en21});
  out.rec_en = den.forward(tree, out.f_en);
  return out;
}

FusionModel FusionModel::build(const ModelConfig& cfg, uint64_t seed) {
  require(cfg.channels >= 2, "model: channels must be >= 2");
  if (cfg.use_siphia)
    require(cfg.channels % 2 == 0,
            "model: channels must be even for the auxiliary branch");

  FusionModel m;
  m.cfg = cfg;
  m.enc_ir = MitEncoder::make("mit.enc_ir", cfg.channels, cfg.rdb_layers,
                              cfg.growth());
  m.enc_vis = MitEncoder::make("mit.enc_vis", cfg.channels, cfg.rdb_layers,
                               cfg.growth());
  if (cfg.use_mit) m.mrl = MutualTransfer::make("mit.mrl", cfg.channels);
  if (cfg.use_siphia) {
    m.siphia_ir = Siphia::make("siphia_ir", cfg.channels);
    m.siphia_vis = Siphia::make("siphia_vis", cfg.channels);
  }
  m.dfuse = ConvTanhDecoder::make("mit.dfuse", cfg.fuse_channels());

  Rng rng(seed);
  m.enc_ir.init(m.params, rng);
  m.enc_vis.init(m.params, rng);
  if (cfg.use_mit) m.mrl.init(m.params, rng);
  if (cfg.use_siphia) {
    m.siphia_ir.init(m.params, rng);
    m.siphia_vis.init(m.params, rng);
  }
  m.dfuse.init(m.params, rng);
  return m;
}

Value FusionModel::fuse(const MitOutputs& m, const Value& f_ir_ed,
                        const Value& f_ir_en, const Value& f_vis_ed,
                        const Value& f_vis_en) const {
  Value cat = nn::concat_channels(
      {m.f_vis2ir, f_ir_ed, f_ir_en, m.f_ir2vis, f_vis_ed, f_vis_en});
  if (cat.shape()[0] != 6 * cfg.channels)
    throw ValidationError("fuse: decoder expects " +
                          std::to_string(6 * cfg.channels) + " channels, got " +
                          std::to_string(cat.shape()[0]));
  return dfuse.forward(params, cat);
}

ForwardResult FusionModel::forward(const DualInput& ir,
                                   const DualInput& vis) const {
  require(ir.height == vis.height && ir.width == vis.width,
          "forward: registered pair must share dimensions");
  Value x_ir = Value::constant(ir.data);
  Value x_vis = Value::constant(vis.data);
  Value f_ir = enc_ir.forward(params, x_ir);
  Value f_vis = enc_vis.forward(params, x_vis);

  ForwardResult r;
  if (cfg.use_mit) {
    r.mit = mrl.forward(params, f_ir, f_vis);
  } else {
    r.mit = MitOutputs{f_ir, f_vis, f_ir, f_vis};
  }

  if (cfg.use_siphia) {
    r.sip_ir = siphia_ir.forward(params, r.mit.f_vis2ir);
    r.sip_vis = siphia_vis.forward(params, r.mit.f_ir2vis);
    r.fuse_input = nn::concat_channels({r.mit.f_vis2ir, r.sip_ir.f_ed,
                                        r.sip_ir.f_en, r.mit.f_ir2vis,
                                        r.sip_vis.f_ed, r.sip_vis.f_en});
  } else {
    r.fuse_input = nn::concat_channels({r.mit.f_vis2ir, r.mit.f_ir2vis});
  }
  if (r.fuse_input.shape()[0] != cfg.fuse_channels())
    throw ValidationError("forward: decoder input arity mismatch");
  r.fused = dfuse.forward(params, r.fuse_input);
  return r;
}

GrayImage FusionModel::fuse_pair(const GrayImage& ir,
                                 const GrayImage& vis) const {
  ForwardResult r = forward(make_dual_input(ir), make_dual_input(vis));
  return gray_from_tensor(r.fused.val());
}

}  // namespace ivfuse
