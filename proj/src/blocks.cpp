#include "ivfuse/blocks.hpp"

#include <cmath>

#include "ivfuse/errors.hpp"

namespace ivfuse {

using nn::Value;

void Conv2dBlock::init(ParamTree& tree, Rng& rng) const {
  Tensor w({cout, cin, ksize, ksize});
  const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * ksize * ksize));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  tree.create(key + ".w", std::move(w));
  tree.create(key + ".b", Tensor({cout}));
}

Value Conv2dBlock::forward(const ParamTree& tree, const Value& x) const {
  return nn::conv2d(x, tree.param(key + ".w"), tree.param(key + ".b"));
}

ShallowExtract ShallowExtract::make(const std::string& key, int cin, int cout) {
  return ShallowExtract{Conv2dBlock{key + ".conv", cin, cout, 3}};
}

Value ShallowExtract::forward(const ParamTree& tree, const Value& x) const {
  return nn::leaky_relu(conv.forward(tree, x), slope);
}

ResidualDenseBlock ResidualDenseBlock::make(const std::string& key,
                                            int channels, int layers,
                                            int growth) {
  ResidualDenseBlock b;
  b.channels = channels;
  b.layers = layers;
  b.growth = growth;
  for (int i = 0; i < layers; ++i)
    b.convs.push_back(Conv2dBlock{key + ".layer" + std::to_string(i),
                                  channels + i * growth, growth, 3});
  b.lff = Conv2dBlock{key + ".lff", channels + layers * growth, channels, 1};
  return b;
}

void ResidualDenseBlock::init(ParamTree& tree, Rng& rng) const {
  for (const auto& c : convs) c.init(tree, rng);
  lff.init(tree, rng);
}

Value ResidualDenseBlock::forward(const ParamTree& tree, const Value& x) const {
  require(x.shape()[0] == channels, "rdb_forward: channel mismatch");
  Value dense = x;
  for (const auto& c : convs) {
    Value y = nn::relu(c.forward(tree, dense));
    dense = nn::concat_channels({dense, y});
  }
  return nn::add(lff.forward(tree, dense), x);
}

AttentionProjector AttentionProjector::make(const std::string& key,
                                            int channels) {
  return AttentionProjector{Conv2dBlock{key + ".wq", channels, channels, 1},
                            Conv2dBlock{key + ".wk", channels, channels, 1},
                            Conv2dBlock{key + ".wv", channels, channels, 1}};
}

void AttentionProjector::init(ParamTree& tree, Rng& rng) const {
  wq.init(tree, rng);
  wk.init(tree, rng);
  wv.init(tree, rng);
}

Value channel_attention(const ParamTree& tree, const Conv2dBlock& wq,
                        const Conv2dBlock& wk, const Conv2dBlock& wv,
                        const Value& q_src, const Value& k_src,
                        const Value& v_src) {
  check_same_shape(q_src.val(), k_src.val(), "channel_attention");
  check_same_shape(q_src.val(), v_src.val(), "channel_attention");
  Value q = wq.forward(tree, q_src);
  Value k = wk.forward(tree, k_src);
  Value v = wv.forward(tree, v_src);
  const double d = static_cast<double>(q.shape()[1]) * q.shape()[2];
  Value affinity = nn::softmax_rows(nn::gram(q, k, 1.0 / std::sqrt(d)));
  return nn::channel_mix(affinity, v);
}

Value channel_attention(const ParamTree& tree, const AttentionProjector& proj,
                        const Value& q_src, const Value& k_src,
                        const Value& v_src) {
  return channel_attention(tree, proj.wq, proj.wk, proj.wv, q_src, k_src,
                           v_src);
}

EnhanceResidual EnhanceResidual::make(const std::string& key, int channels) {
  return EnhanceResidual{Conv2dBlock{key, channels, channels, 1}};
}

Value EnhanceResidual::forward(const ParamTree& tree, const Value& attended,
                               const Value& skip) const {
  check_same_shape(attended.val(), skip.val(), "enhance_residual");
  return nn::add(conv.forward(tree, attended), skip);
}

ConvTanhDecoder ConvTanhDecoder::make(const std::string& key, int cin) {
  return ConvTanhDecoder{Conv2dBlock{key, cin, 1, 3}};
}

Value ConvTanhDecoder::forward(const ParamTree& tree, const Value& f) const {
  return nn::affine(nn::tanh_op(conv.forward(tree, f)), 0.5, 0.5);
}

}  // namespace ivfuse
