#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ivfuse/checkpoint.hpp"
#include "ivfuse/losses.hpp"
#include "ivfuse/model.hpp"

namespace ivfuse {

struct TrainConfig {
  int channels = 32;
  int patch_size = 120;
  int batch_size = 8;
  int iteration_maximum = 1000;
  double lambda_edge = 20.0;
  double lambda_jg = 20.0;
  uint64_t seed = 1;
  int phase_block = 200;
  double lr_mit_phase1 = 1e-3;
  double lr_mit_phase2 = 1e-5;
  double lr_siphia = 1e-3;
  // Piecewise-constant decay: x0.1 past decay_frac1 * iteration_maximum,
  // x1e-4 past decay_frac2 * iteration_maximum (1e-3 -> 1e-4 -> 1e-7).
  double decay_frac1 = 0.1;
  double decay_frac2 = 0.4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 10.0;  // global-norm gradient clip per update
  int rdb_layers = 4;
  int rdb_growth = 0;  // 0 -> equal to channels
  std::string ir_dir;
  std::string vis_dir;
  bool use_mit = true;
  bool use_siphia = true;
  bool use_mptp = true;  // false: joint single-phase training, no KL term
  bool use_rec = true;
  bool use_grad = true;
  bool use_en = true;

  void validate() const;
  ModelConfig model_config() const;

  // Flat key=value form; exactly the config-file vocabulary.
  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  static TrainConfig from_file(const std::string& path);
  static TrainConfig from_string(const std::string& text);
};

enum class Phase { M, S };
inline char phase_letter(Phase p) { return p == Phase::M ? 'M' : 'S'; }

// Training alternates in contiguous blocks of phase_block iterations,
// starting with an M block.
Phase phase_select(int64_t iter, int64_t phase_block);

// Base rate by phase (and, for M, by whether this is the first M block),
// then the global piecewise decay.
double lr_schedule(int64_t iter, Phase phase, const TrainConfig& cfg);

// Adam with per-parameter moment tensors and bias correction; one instance
// per optimizer so the four stores never share state.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates the unfrozen parameters in `keys` from their accumulated
  // gradients, global-norm clipped at clip_norm (<=0 disables).
  void step(ParamTree& tree, const std::vector<std::string>& keys, double lr,
            double clip_norm);

  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  double beta1_, beta2_, eps_;
  AdamState state_;
};

// The alternating two-phase training loop. M blocks update the transfer
// branch against the intensity+gradient objective with the auxiliary
// branches frozen; S blocks update the auxiliary branches against their
// reconstruction objectives plus the KL pull toward the (detached) fused
// result.
class TrainLoop {
 public:
  TrainLoop(TrainConfig cfg, std::vector<DatasetPair> data);

  void restore(const Checkpoint& ck);
  Checkpoint snapshot() const;

  std::vector<PatchPair> sample_batch(int64_t iter) const;
  LossBundle run_iteration(int64_t iter);

  // Full loop with per-iteration logging and a checkpoint at every phase
  // boundary. out_dir may be empty (no files written). Returns the final
  // checkpoint, which is also written as <out_dir>/final.ckpt.
  Checkpoint run(const std::string& out_dir);

  FusionModel& model() { return model_; }
  const FusionModel& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t iteration() const { return iter_; }

  // Mean full-image transfer-branch loss over the dataset; no updates.
  double eval_mit_loss() const;

  std::function<void(const std::string&)> log_sink;  // one line per call

 private:
  LossBundle step_mit(const std::vector<PatchPair>& batch, int64_t iter);
  LossBundle step_aux(const std::vector<PatchPair>& batch, int64_t iter);
  LossBundle step_joint(const std::vector<PatchPair>& batch, int64_t iter);
  void check_finite(double loss, int64_t iter,
                    const std::vector<PatchPair>& batch) const;
  void emit_log(int64_t iter, Phase phase, const LossBundle& bundle);

  TrainConfig cfg_;
  std::vector<DatasetPair> data_;
  FusionModel model_;
  Adam opt_mit1_, opt_mit2_, opt_siphia_ir_, opt_siphia_vis_;
  int64_t iter_ = 0;
};

// Rebuilds the model a checkpoint was trained with (architecture from the
// config snapshot, weights and shuffles from the blob).
FusionModel build_model_from_checkpoint(const Checkpoint& ck);

}  // namespace ivfuse
