#pragma once

#include <utility>

#include "ivfuse/blocks.hpp"

namespace ivfuse {

// Auxiliary per-modality branch. Splits the transferred feature into two
// shuffled channel groups, reconstructs each group against a source image,
// cross-attends the groups into enhanced features, and derives edge
// features with their own supervised reconstructions. Everything the
// fusion decoder consumes besides the transferred features comes from here.

// Fixed channel shuffle drawn once at model construction and serialized
// with the checkpoint; the group decoders are supervised per group, so the
// assignment must not change between steps or runs.
struct ChannelPermutation {
  std::vector<int> perm;

  static ChannelPermutation random(int channels, Rng& rng);
  static ChannelPermutation identity(int channels);
  void validate(int channels) const;  // bijection on {0..C-1}, C even
};

struct SiphiaOutputs {
  nn::Value f_ed;   // C channels: [edge grp1<-grp2, edge grp2<-grp1]
  nn::Value f_en;   // C channels: [enh grp1<-grp2, enh grp2<-grp1]
  nn::Value rec1;   // group-1 reconstruction, supervised by the ir source
  nn::Value rec2;   // group-2 reconstruction, supervised by the vis source
  nn::Value edge1;  // edge reconstruction supervised by the ir gradient
  nn::Value edge2;  // edge reconstruction supervised by the vis gradient
  nn::Value rec_en; // reconstruction from the full enhanced feature
};

std::pair<nn::Value, nn::Value> shuffle_split(const nn::Value& f,
                                              const ChannelPermutation& perm);

struct Siphia {
  int channels = 0;  // C of the incoming transferred feature; groups are C/2
  ChannelPermutation perm;
  ConvTanhDecoder d1rec, d2rec;
  AttentionProjector proj1, proj2;  // per-group q/k/v projections
  EnhanceResidual enh21, enh12;     // grp2<-grp1 and grp1<-grp2 paths
  Conv2dBlock e1ed, e2ed;           // 3x3 + Tanh edge encoders, C/2 -> C/2
  ConvTanhDecoder d1ed, d2ed;
  ConvTanhDecoder den;              // decodes the full enhanced feature

  static Siphia make(const std::string& key, int channels);
  void init(ParamTree& tree, Rng& rng);  // also draws the channel shuffle

  std::pair<nn::Value, nn::Value> hiassi_reconstruct(
      const ParamTree& tree, const nn::Value& grp1,
      const nn::Value& grp2) const;

  // Returns (grp2<-grp1, grp1<-grp2) enhanced features; the skip of the
  // grp2<-grp1 path is grp1, as the formulation has it.
  std::pair<nn::Value, nn::Value> sip_enhance(const ParamTree& tree,
                                              const nn::Value& grp1,
                                              const nn::Value& grp2) const;

  // Returns (ed21, ed12, edge1, edge2).
  std::tuple<nn::Value, nn::Value, nn::Value, nn::Value> sip_edge(
      const ParamTree& tree, const nn::Value& en21,
      const nn::Value& en12) const;

  SiphiaOutputs forward(const ParamTree& tree,
                        const nn::Value& f_transferred) const;
};

}  // namespace ivfuse
