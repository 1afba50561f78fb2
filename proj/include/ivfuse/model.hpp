#pragma once

#include "ivfuse/image.hpp"
#include "ivfuse/mit.hpp"
#include "ivfuse/siphia.hpp"

namespace ivfuse {

struct ModelConfig {
  int channels = 32;   // C; must be even when the auxiliary branch is on
  int rdb_layers = 4;
  int rdb_growth = 0;  // 0 -> same as channels
  bool use_mit = true;     // false: transferred features are the encoder outputs
  bool use_siphia = true;  // false: fusion decoder sees 2C channels only

  int growth() const { return rdb_growth > 0 ? rdb_growth : channels; }
  int fuse_channels() const { return use_siphia ? 6 * channels : 2 * channels; }
};

struct ForwardResult {
  MitOutputs mit;
  SiphiaOutputs sip_ir;   // defined only when use_siphia
  SiphiaOutputs sip_vis;
  nn::Value fuse_input;   // concatenated decoder input, for arity checks
  nn::Value fused;        // {1,H,W} in [0,1]
};

// The whole fusion network over one registered pair of dual inputs.
struct FusionModel {
  ModelConfig cfg;
  MitEncoder enc_ir, enc_vis;
  MutualTransfer mrl;
  Siphia siphia_ir, siphia_vis;
  ConvTanhDecoder dfuse;
  ParamTree params;

  static FusionModel build(const ModelConfig& cfg, uint64_t seed);

  ForwardResult forward(const DualInput& ir, const DualInput& vis) const;

  // Decoder stage alone: concatenates in the fixed order
  // [f_vis2ir, f_ed_ir, f_en_ir, f_ir2vis, f_ed_vis, f_en_vis].
  nn::Value fuse(const MitOutputs& m, const nn::Value& f_ir_ed,
                 const nn::Value& f_ir_en, const nn::Value& f_vis_ed,
                 const nn::Value& f_vis_en) const;

  GrayImage fuse_pair(const GrayImage& ir, const GrayImage& vis) const;
};

}  // namespace ivfuse
