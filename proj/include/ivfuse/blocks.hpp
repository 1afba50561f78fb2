#pragma once

#include <string>
#include <vector>

#include "ivfuse/autodiff.hpp"
#include "ivfuse/params.hpp"
#include "ivfuse/rng.hpp"

namespace ivfuse {

// Learnable building blocks. Each block owns its key prefix inside a
// ParamTree; init() registers Kaiming-uniform kernels and zero biases,
// forward() builds the autodiff graph against whatever the tree currently
// holds.

struct Conv2dBlock {
  std::string key;
  int cin = 0;
  int cout = 0;
  int ksize = 3;

  void init(ParamTree& tree, Rng& rng) const;
  nn::Value forward(const ParamTree& tree, const nn::Value& x) const;
};

// 3x3 conv + LeakyReLU(0.2); lifts the 2-channel dual input to C channels.
struct ShallowExtract {
  Conv2dBlock conv;
  double slope = 0.2;

  static ShallowExtract make(const std::string& key, int cin, int cout);
  void init(ParamTree& tree, Rng& rng) const { conv.init(tree, rng); }
  nn::Value forward(const ParamTree& tree, const nn::Value& x) const;
};

// L densely connected 3x3 conv+ReLU layers of growth rate g, a 1x1
// local-feature-fusion conv back to C, and a residual skip of the input.
struct ResidualDenseBlock {
  int channels = 0;
  int layers = 4;
  int growth = 0;
  std::vector<Conv2dBlock> convs;
  Conv2dBlock lff;

  static ResidualDenseBlock make(const std::string& key, int channels,
                                 int layers, int growth);
  void init(ParamTree& tree, Rng& rng) const;
  nn::Value forward(const ParamTree& tree, const nn::Value& x) const;
};

// 1x1 query/key/value projections for channel attention.
struct AttentionProjector {
  Conv2dBlock wq, wk, wv;

  static AttentionProjector make(const std::string& key, int channels);
  void init(ParamTree& tree, Rng& rng) const;
};

// Channel attention: the CxC affinity softmax(Q·Kᵀ/√d) mixes V's channels,
// with d = H·W (the length of the vectors entering each dot product).
// Q/K/V may come from different projections; see mutual_transfer.
nn::Value channel_attention(const ParamTree& tree, const Conv2dBlock& wq,
                            const Conv2dBlock& wk, const Conv2dBlock& wv,
                            const nn::Value& q_src, const nn::Value& k_src,
                            const nn::Value& v_src);
nn::Value channel_attention(const ParamTree& tree,
                            const AttentionProjector& proj,
                            const nn::Value& q_src, const nn::Value& k_src,
                            const nn::Value& v_src);

// 1x1 conv of the attended map plus an elementwise residual skip.
struct EnhanceResidual {
  Conv2dBlock conv;

  static EnhanceResidual make(const std::string& key, int channels);
  void init(ParamTree& tree, Rng& rng) const { conv.init(tree, rng); }
  nn::Value forward(const ParamTree& tree, const nn::Value& attended,
                    const nn::Value& skip) const;
};

// 3x3 conv to one channel, Tanh, remapped [-1,1] -> [0,1].
struct ConvTanhDecoder {
  Conv2dBlock conv;

  static ConvTanhDecoder make(const std::string& key, int cin);
  void init(ParamTree& tree, Rng& rng) const { conv.init(tree, rng); }
  nn::Value forward(const ParamTree& tree, const nn::Value& f) const;
};

}  // namespace ivfuse
