#pragma once

#include "ivfuse/blocks.hpp"
#include "ivfuse/image.hpp"

namespace ivfuse {

// Mutual information transfer branch: per-modality encoders plus the
// cross-modality representation step that turns each modality's features
// into a blend carrying both.

struct MitOutputs {
  nn::Value f_ir;      // encoder output, infrared
  nn::Value f_vis;     // encoder output, visible
  nn::Value f_vis2ir;  // visible information represented on the infrared side
  nn::Value f_ir2vis;  // infrared information represented on the visible side
};

// Shallow 3x3 conv + LeakyReLU, then one residual dense block.
// The two modality encoders share structure but never parameters.
struct MitEncoder {
  ShallowExtract shallow;
  ResidualDenseBlock rdb;

  static MitEncoder make(const std::string& key, int channels, int rdb_layers,
                         int rdb_growth);
  void init(ParamTree& tree, Rng& rng) const;
  nn::Value forward(const ParamTree& tree, const nn::Value& dual) const;
};

// Channel attention with same-modality Q/K against the other modality's V,
// then a 1x1 enhancement with a residual skip of the attending modality.
struct MutualTransfer {
  AttentionProjector proj_ir, proj_vis;
  EnhanceResidual enh_ir, enh_vis;

  static MutualTransfer make(const std::string& key, int channels);
  void init(ParamTree& tree, Rng& rng) const;
  MitOutputs forward(const ParamTree& tree, const nn::Value& f_ir,
                     const nn::Value& f_vis) const;
};

}  // namespace ivfuse
