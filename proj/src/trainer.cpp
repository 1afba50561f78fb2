#include "ivfuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ivfuse/errors.hpp"
#include "ivfuse/rng.hpp"

namespace fs = std::filesystem;

namespace ivfuse {

using nn::Value;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    require(pos == s.size(), "config: trailing junk in value for " + key);
    return v;
  } catch (const std::logic_error&) {
    throw ValidationError("config: bad numeric value for " + key + ": " + s);
  }
}

int parse_int(const std::string& key, const std::string& s) {
  double v = parse_double(key, s);
  require(v == std::floor(v), "config: integer expected for " + key);
  return static_cast<int>(v);
}

uint64_t parse_u64(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    uint64_t v = std::stoull(s, &pos);
    require(pos == s.size(), "config: trailing junk in value for " + key);
    return v;
  } catch (const std::logic_error&) {
    throw ValidationError("config: bad seed value for " + key + ": " + s);
  }
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ValidationError("config: boolean expected for " + key + ": " + s);
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Decay factor shared by every schedule: x0.1 past the first threshold,
// x1e-4 past the second (1e-3 -> 1e-4 -> 1e-7 for a 1e-3 base).
double decay_factor(int64_t iter, const TrainConfig& cfg) {
  const int64_t t1 = static_cast<int64_t>(
      std::floor(cfg.decay_frac1 * cfg.iteration_maximum));
  const int64_t t2 = static_cast<int64_t>(
      std::floor(cfg.decay_frac2 * cfg.iteration_maximum));
  if (iter >= t2) return 1e-4;
  if (iter >= t1) return 1e-1;
  return 1.0;
}

}  // namespace

void TrainConfig::validate() const {
  require(channels >= 2, "config: channels must be >= 2");
  require(!use_siphia || channels % 2 == 0,
          "config: channels must be even when use_siphia is on");
  require(patch_size >= 8, "config: patch_size must be >= 8");
  require(batch_size >= 1, "config: batch_size must be >= 1");
  require(iteration_maximum >= 1, "config: iteration_maximum must be >= 1");
  require(phase_block >= 1, "config: phase_block must be >= 1");
  require(lambda_edge >= 0.0 && lambda_jg >= 0.0,
          "config: lambda values must be >= 0");
  require(lr_mit_phase1 > 0.0 && lr_mit_phase2 > 0.0 && lr_siphia > 0.0,
          "config: learning rates must be > 0");
  require(decay_frac1 >= 0.0 && decay_frac2 >= decay_frac1 &&
              decay_frac2 <= 1.0,
          "config: decay fractions must satisfy 0 <= f1 <= f2 <= 1");
  require(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 &&
              adam_beta2 < 1.0,
          "config: adam betas must lie in (0,1)");
  require(rdb_layers >= 1, "config: rdb_layers must be >= 1");
  require(rdb_growth >= 0, "config: rdb_growth must be >= 0");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig mc;
  mc.channels = channels;
  mc.rdb_layers = rdb_layers;
  mc.rdb_growth = rdb_growth;
  mc.use_mit = use_mit;
  mc.use_siphia = use_siphia;
  return mc;
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"channels", std::to_string(channels)},
      {"patch_size", std::to_string(patch_size)},
      {"batch_size", std::to_string(batch_size)},
      {"iteration_maximum", std::to_string(iteration_maximum)},
      {"lambda_edge", fmt_double(lambda_edge)},
      {"lambda_jg", fmt_double(lambda_jg)},
      {"seed", std::to_string(seed)},
      {"phase_block", std::to_string(phase_block)},
      {"lr_mit_phase1", fmt_double(lr_mit_phase1)},
      {"lr_mit_phase2", fmt_double(lr_mit_phase2)},
      {"lr_siphia", fmt_double(lr_siphia)},
      {"decay_frac1", fmt_double(decay_frac1)},
      {"decay_frac2", fmt_double(decay_frac2)},
      {"adam_beta1", fmt_double(adam_beta1)},
      {"adam_beta2", fmt_double(adam_beta2)},
      {"adam_eps", fmt_double(adam_eps)},
      {"clip_norm", fmt_double(clip_norm)},
      {"rdb_layers", std::to_string(rdb_layers)},
      {"rdb_growth", std::to_string(rdb_growth)},
      {"ir_dir", ir_dir},
      {"vis_dir", vis_dir},
      {"use_mit", use_mit ? "true" : "false"},
      {"use_siphia", use_siphia ? "true" : "false"},
      {"use_mptp", use_mptp ? "true" : "false"},
      {"use_rec", use_rec ? "true" : "false"},
      {"use_grad", use_grad ? "true" : "false"},
      {"use_en", use_en ? "true" : "false"},
  };
}

TrainConfig TrainConfig::from_map(
    const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  for (const auto& [key, val] : kv) {
    if (key == "channels") c.channels = parse_int(key, val);
    else if (key == "patch_size") c.patch_size = parse_int(key, val);
    else if (key == "batch_size") c.batch_size = parse_int(key, val);
    else if (key == "iteration_maximum") c.iteration_maximum = parse_int(key, val);
    else if (key == "lambda_edge") c.lambda_edge = parse_double(key, val);
    else if (key == "lambda_jg") c.lambda_jg = parse_double(key, val);
    else if (key == "seed") c.seed = parse_u64(key, val);
    else if (key == "phase_block") c.phase_block = parse_int(key, val);
    else if (key == "lr_mit_phase1") c.lr_mit_phase1 = parse_double(key, val);
    else if (key == "lr_mit_phase2") c.lr_mit_phase2 = parse_double(key, val);
    else if (key == "lr_siphia") c.lr_siphia = parse_double(key, val);
    else if (key == "decay_frac1") c.decay_frac1 = parse_double(key, val);
    else if (key == "decay_frac2") c.decay_frac2 = parse_double(key, val);
    else if (key == "adam_beta1") c.adam_beta1 = parse_double(key, val);
    else if (key == "adam_beta2") c.adam_beta2 = parse_double(key, val);
    else if (key == "adam_eps") c.adam_eps = parse_double(key, val);
    else if (key == "clip_norm") c.clip_norm = parse_double(key, val);
    else if (key == "rdb_layers") c.rdb_layers = parse_int(key, val);
    else if (key == "rdb_growth") c.rdb_growth = parse_int(key, val);
    else if (key == "ir_dir") c.ir_dir = val;
    else if (key == "vis_dir") c.vis_dir = val;
    else if (key == "use_mit") c.use_mit = parse_bool(key, val);
    else if (key == "use_siphia") c.use_siphia = parse_bool(key, val);
    else if (key == "use_mptp") c.use_mptp = parse_bool(key, val);
    else if (key == "use_rec") c.use_rec = parse_bool(key, val);
    else if (key == "use_grad") c.use_grad = parse_bool(key, val);
    else if (key == "use_en") c.use_en = parse_bool(key, val);
    else throw ValidationError("config: unknown key: " + key);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_string(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, "config: line " + std::to_string(lineno) +
                                         " is not key=value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    require(!key.empty(), "config: empty key on line " + std::to_string(lineno));
    require(kv.emplace(key, val).second, "config: duplicate key: " + key);
  }
  return from_map(kv);
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

Phase phase_select(int64_t iter, int64_t phase_block) {
  require(iter >= 0 && phase_block >= 1, "phase_select: bad arguments");
  return (iter / phase_block) % 2 == 0 ? Phase::M : Phase::S;
}

double lr_schedule(int64_t iter, Phase phase, const TrainConfig& cfg) {
  const int64_t block = iter / cfg.phase_block;
  double base;
  if (phase == Phase::S)
    base = cfg.lr_siphia;
  else
    base = block == 0 ? cfg.lr_mit_phase1 : cfg.lr_mit_phase2;
  return base * decay_factor(iter, cfg);
}

void Adam::step(ParamTree& tree, const std::vector<std::string>& keys,
                double lr, double clip_norm) {
  double sq = 0.0;
  for (const auto& key : keys) {
    if (tree.is_frozen(key)) continue;
    for (double g : tree.grad(key).data) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip =
      (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

  state_.step += 1;
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);

  for (const auto& key : keys) {
    if (tree.is_frozen(key)) continue;
    Tensor& p = tree.mutable_value(key);
    const Tensor& g = tree.grad(key);
    Tensor& m = state_.m.try_emplace(key, Tensor::zeros(p.shape)).first->second;
    Tensor& v = state_.v.try_emplace(key, Tensor::zeros(p.shape)).first->second;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = g.data[i] * clip;
      m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
      v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

TrainLoop::TrainLoop(TrainConfig cfg, std::vector<DatasetPair> data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      model_(FusionModel::build(cfg_.model_config(), cfg_.seed)),
      opt_mit1_(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_mit2_(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_siphia_ir_(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_siphia_vis_(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps) {
  cfg_.validate();
  require(!data_.empty(), "train: dataset is empty");
  for (const auto& p : data_)
    require(p.ir.height >= cfg_.patch_size && p.ir.width >= cfg_.patch_size,
            "train: pair " + p.name + " is smaller than the patch size");
}

std::vector<PatchPair> TrainLoop::sample_batch(int64_t iter) const {
  Rng rng(Rng::mix(cfg_.seed, static_cast<uint64_t>(iter)));
  std::vector<PatchPair> batch;
  batch.reserve(static_cast<size_t>(cfg_.batch_size));
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const auto& pair = data_[rng.uniform_int(data_.size())];
    const int max_r = pair.ir.height - cfg_.patch_size;
    const int max_c = pair.ir.width - cfg_.patch_size;
    PatchPair pp;
    pp.row = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_r) + 1));
    pp.col = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_c) + 1));
    pp.ir_raw = crop(pair.ir, pp.row, pp.col, cfg_.patch_size, cfg_.patch_size);
    pp.vis_raw =
        crop(pair.vis, pp.row, pp.col, cfg_.patch_size, cfg_.patch_size);
    pp.ir_patch = make_dual_input(pp.ir_raw);
    pp.vis_patch = make_dual_input(pp.vis_raw);
    pp.source_id = pair.name + ":" + std::to_string(pp.row) + "," +
                   std::to_string(pp.col);
    batch.push_back(std::move(pp));
  }
  return batch;
}

void TrainLoop::check_finite(double loss, int64_t iter,
                             const std::vector<PatchPair>& batch) const {
  if (std::isfinite(loss)) return;
  std::string ids;
  for (const auto& pp : batch) ids += " " + pp.source_id;
  throw IoError("non-finite loss at iteration " + std::to_string(iter) +
                "; batch:" + ids);
}

LossBundle TrainLoop::step_mit(const std::vector<PatchPair>& batch,
                               int64_t iter) {
  if (cfg_.use_siphia) {
    model_.params.set_frozen("siphia_ir", true);
    model_.params.set_frozen("siphia_vis", true);
  }
  model_.params.set_frozen("mit", false);
  model_.params.zero_grad();

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossBundle sum;
  for (const auto& pp : batch) {
    ForwardResult fr = model_.forward(pp.ir_patch, pp.vis_patch);
    LossBundle b;
    Value lm = loss_mit(fr.fused, pp.ir_raw, pp.vis_raw, cfg_.lambda_jg, &b);
    check_finite(lm.item(), iter, batch);
    nn::backward(lm, inv_b);
    for (const auto& [k, val] : b) sum[k] += val * inv_b;
  }

  const bool alternating = cfg_.use_mptp && cfg_.use_siphia;
  const bool first_stage = !alternating || iter / cfg_.phase_block == 0;
  const double lr =
      (first_stage ? cfg_.lr_mit_phase1 : cfg_.lr_mit_phase2) *
      decay_factor(iter, cfg_);
  Adam& opt = first_stage ? opt_mit1_ : opt_mit2_;
  opt.step(model_.params, model_.params.keys_with_prefix("mit"), lr,
           cfg_.clip_norm);
  return sum;
}

LossBundle TrainLoop::step_aux(const std::vector<PatchPair>& batch,
                               int64_t iter) {
  model_.params.set_frozen("mit", true);
  model_.params.set_frozen("siphia_ir", false);
  model_.params.set_frozen("siphia_vis", false);
  model_.params.zero_grad();

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossBundle sum;
  for (const auto& pp : batch) {
    ForwardResult fr = model_.forward(pp.ir_patch, pp.vis_patch);
    const Tensor fused_label = fr.fused.val();  // constant "label"

    std::vector<Value> terms;
    double rec_v = 0.0, grad_v = 0.0, en_v = 0.0;
    for (const SiphiaOutputs* sip : {&fr.sip_ir, &fr.sip_vis}) {
      if (cfg_.use_rec) {
        Value r = loss_rec(sip->rec1, sip->rec2, pp.ir_raw, pp.vis_raw);
        rec_v += r.item();
        terms.push_back(r);
      }
      if (cfg_.use_grad) {
        Value g = loss_grad(sip->edge1, sip->edge2, pp.ir_raw, pp.vis_raw);
        grad_v += g.item();
        terms.push_back(g);
      }
      if (cfg_.use_en) {
        Value e = loss_en(sip->rec_en, pp.ir_raw, pp.vis_raw, cfg_.lambda_edge);
        en_v += e.item();
        terms.push_back(e);
      }
    }
    Value inter = loss_inter(fused_label, fr.sip_ir.rec_en, fr.sip_vis.rec_en);
    terms.push_back(inter);

    Value total = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) total = nn::add(total, terms[i]);
    check_finite(total.item(), iter, batch);
    nn::backward(total, inv_b);

    sum["rec"] += rec_v * inv_b;
    sum["grad"] += grad_v * inv_b;
    sum["en"] += en_v * inv_b;
    sum["siphia_total"] += (rec_v + grad_v + en_v) * inv_b;
    sum["inter"] += inter.item() * inv_b;

    LossBundle diag;  // transfer-branch components, logged for monitoring
    loss_mit(Value::constant(fused_label), pp.ir_raw, pp.vis_raw,
             cfg_.lambda_jg, &diag);
    for (const auto& [k, val] : diag) sum[k] += val * inv_b;
  }

  const double lr = lr_schedule(iter, Phase::S, cfg_);
  opt_siphia_ir_.step(model_.params,
                      model_.params.keys_with_prefix("siphia_ir"), lr,
                      cfg_.clip_norm);
  opt_siphia_vis_.step(model_.params,
                       model_.params.keys_with_prefix("siphia_vis"), lr,
                       cfg_.clip_norm);
  return sum;
}

LossBundle TrainLoop::step_joint(const std::vector<PatchPair>& batch,
                                 int64_t iter) {
  model_.params.set_frozen("mit", false);
  if (cfg_.use_siphia) {
    model_.params.set_frozen("siphia_ir", false);
    model_.params.set_frozen("siphia_vis", false);
  }
  model_.params.zero_grad();

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossBundle sum;
  for (const auto& pp : batch) {
    ForwardResult fr = model_.forward(pp.ir_patch, pp.vis_patch);
    LossBundle b;
    Value total = loss_mit(fr.fused, pp.ir_raw, pp.vis_raw, cfg_.lambda_jg, &b);
    double rec_v = 0.0, grad_v = 0.0, en_v = 0.0;
    if (cfg_.use_siphia) {
      for (const SiphiaOutputs* sip : {&fr.sip_ir, &fr.sip_vis}) {
        if (cfg_.use_rec) {
          Value r = loss_rec(sip->rec1, sip->rec2, pp.ir_raw, pp.vis_raw);
          rec_v += r.item();
          total = nn::add(total, r);
        }
        if (cfg_.use_grad) {
          Value g = loss_grad(sip->edge1, sip->edge2, pp.ir_raw, pp.vis_raw);
          grad_v += g.item();
          total = nn::add(total, g);
        }
        if (cfg_.use_en) {
          Value e =
              loss_en(sip->rec_en, pp.ir_raw, pp.vis_raw, cfg_.lambda_edge);
          en_v += e.item();
          total = nn::add(total, e);
        }
      }
    }
    check_finite(total.item(), iter, batch);
    nn::backward(total, inv_b);
    for (const auto& [k, val] : b) sum[k] += val * inv_b;
    sum["rec"] += rec_v * inv_b;
    sum["grad"] += grad_v * inv_b;
    sum["en"] += en_v * inv_b;
    sum["siphia_total"] += (rec_v + grad_v + en_v) * inv_b;
  }

  const double df = decay_factor(iter, cfg_);
  opt_mit1_.step(model_.params, model_.params.keys_with_prefix("mit"),
                 cfg_.lr_mit_phase1 * df, cfg_.clip_norm);
  if (cfg_.use_siphia) {
    opt_siphia_ir_.step(model_.params,
                        model_.params.keys_with_prefix("siphia_ir"),
                        cfg_.lr_siphia * df, cfg_.clip_norm);
    opt_siphia_vis_.step(model_.params,
                         model_.params.keys_with_prefix("siphia_vis"),
                         cfg_.lr_siphia * df, cfg_.clip_norm);
  }
  return sum;
}

LossBundle TrainLoop::run_iteration(int64_t iter) {
  std::vector<PatchPair> batch = sample_batch(iter);
  LossBundle bundle;
  if (!cfg_.use_mptp) {
    bundle = step_joint(batch, iter);
  } else if (!cfg_.use_siphia) {
    // No auxiliary branch: nothing alternates, every step trains MIT.
    bundle = step_mit(batch, iter);
  } else {
    const Phase phase = phase_select(iter, cfg_.phase_block);
    bundle = phase == Phase::M ? step_mit(batch, iter) : step_aux(batch, iter);
  }
  iter_ = iter + 1;
  return bundle;
}

void TrainLoop::emit_log(int64_t iter, Phase phase, const LossBundle& bundle) {
  if (!log_sink) return;
  std::string line =
      "iter=" + std::to_string(iter) + " phase=" + phase_letter(phase);
  char buf[64];
  for (const auto& [k, v] : bundle) {
    std::snprintf(buf, sizeof(buf), " %s=%.9g", k.c_str(), v);
    line += buf;
  }
  log_sink(line);
}

Checkpoint TrainLoop::snapshot() const {
  Checkpoint ck;
  ck.iteration = iter_;
  ck.config = cfg_.to_map();
  if (cfg_.use_siphia) {
    ck.perm_ir = model_.siphia_ir.perm.perm;
    ck.perm_vis = model_.siphia_vis.perm.perm;
  }
  for (const auto& key : model_.params.keys())
    ck.tensors[key] = model_.params.value(key);
  ck.adam["mit1"] = opt_mit1_.state();
  ck.adam["mit2"] = opt_mit2_.state();
  ck.adam["siphia_ir"] = opt_siphia_ir_.state();
  ck.adam["siphia_vis"] = opt_siphia_vis_.state();
  return ck;
}

void TrainLoop::restore(const Checkpoint& ck) {
  require(ck.config == cfg_.to_map(),
          "resume: checkpoint config does not match the current config");
  require(ck.tensors.size() == model_.params.size(),
          "resume: checkpoint parameter set does not match the model");
  for (const auto& [key, t] : ck.tensors) {
    require(model_.params.has(key), "resume: unexpected tensor " + key);
    Tensor& dst = model_.params.mutable_value(key);
    require(dst.shape == t.shape, "resume: shape mismatch for " + key);
    dst = t;
  }
  if (cfg_.use_siphia) {
    model_.siphia_ir.perm.perm = ck.perm_ir;
    model_.siphia_vis.perm.perm = ck.perm_vis;
    model_.siphia_ir.perm.validate(cfg_.channels);
    model_.siphia_vis.perm.validate(cfg_.channels);
  }
  auto load_opt = [&](const char* name, Adam& opt) {
    auto it = ck.adam.find(name);
    require(it != ck.adam.end(),
            std::string("resume: missing optimizer state ") + name);
    for (const auto& [key, t] : it->second.m)
      require(model_.params.has(key) &&
                  model_.params.value(key).shape == t.shape,
              "resume: bad optimizer tensor " + key);
    opt.state() = it->second;
  };
  load_opt("mit1", opt_mit1_);
  load_opt("mit2", opt_mit2_);
  load_opt("siphia_ir", opt_siphia_ir_);
  load_opt("siphia_vis", opt_siphia_vis_);
  iter_ = ck.iteration;
}

Checkpoint TrainLoop::run(const std::string& out_dir) {
  std::ofstream log_file;
  const auto prev_sink = log_sink;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log_file.open(fs::path(out_dir) / "train_log.txt", std::ios::app);
    if (!log_file) throw IoError("cannot open training log in " + out_dir);
    if (!prev_sink)
      log_sink = [&log_file](const std::string& line) {
        log_file << line << "\n";
        log_file.flush();
      };
  }

  const int64_t start = iter_;
  for (int64_t iter = start; iter < cfg_.iteration_maximum; ++iter) {
    if (!out_dir.empty() && iter > start && iter % cfg_.phase_block == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_iter%06lld.ckpt",
                    static_cast<long long>(iter));
      save_checkpoint(snapshot(), (fs::path(out_dir) / name).string());
    }
    const Phase phase = (cfg_.use_mptp && cfg_.use_siphia)
                            ? phase_select(iter, cfg_.phase_block)
                            : Phase::M;
    LossBundle bundle = run_iteration(iter);
    emit_log(iter, phase, bundle);
  }

  Checkpoint final_ck = snapshot();
  if (!out_dir.empty())
    save_checkpoint(final_ck, (fs::path(out_dir) / "final.ckpt").string());
  log_sink = prev_sink;
  return final_ck;
}

double TrainLoop::eval_mit_loss() const {
  double total = 0.0;
  for (const auto& pair : data_) {
    ForwardResult fr =
        model_.forward(make_dual_input(pair.ir), make_dual_input(pair.vis));
    LossBundle b;
    loss_mit(fr.fused, pair.ir, pair.vis, cfg_.lambda_jg, &b);
    total += b["mit_total"];
  }
  return total / static_cast<double>(data_.size());
}

FusionModel build_model_from_checkpoint(const Checkpoint& ck) {
  TrainConfig cfg = TrainConfig::from_map(ck.config);
  FusionModel model = FusionModel::build(cfg.model_config(), cfg.seed);
  require(ck.tensors.size() == model.params.size(),
          "checkpoint does not match the model parameter set");
  for (const auto& [key, t] : ck.tensors) {
    require(model.params.has(key), "checkpoint has unexpected tensor " + key);
    Tensor& dst = model.params.mutable_value(key);
    require(dst.shape == t.shape, "checkpoint shape mismatch for " + key);
    dst = t;
  }
  if (cfg.use_siphia) {
    model.siphia_ir.perm.perm = ck.perm_ir;
    model.siphia_vis.perm.perm = ck.perm_vis;
    model.siphia_ir.perm.validate(cfg.channels);
    model.siphia_vis.perm.validate(cfg.channels);
  }
  return model;
}

}  // namespace ivfuse
