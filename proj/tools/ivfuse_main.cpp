// Command-line front end: training, single-pair fusion, corpus evaluation
// and checkpoint inspection. Exit codes: 0 success, 1 validation error,
// 2 runtime/I-O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ivfuse/checkpoint.hpp"
#include "ivfuse/errors.hpp"
#include "ivfuse/metrics.hpp"
#include "ivfuse/trainer.hpp"

namespace fs = std::filesystem;
using namespace ivfuse;

namespace {

int cmd_train(const std::string& config_path, const std::string& resume_path,
              const std::string& out_dir) {
  TrainConfig cfg = TrainConfig::from_file(config_path);
  require(!cfg.ir_dir.empty() && !cfg.vis_dir.empty(),
          "config: ir_dir and vis_dir are required for training");
  std::vector<DatasetPair> data = load_dataset(cfg.ir_dir, cfg.vis_dir);
  TrainLoop loop(cfg, std::move(data));

  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path);
    loop.restore(ck);
    if (loop.iteration() >= cfg.iteration_maximum) {
      std::printf("nothing to do: checkpoint already at iteration %lld\n",
                  static_cast<long long>(loop.iteration()));
      return 0;
    }
  }

  Checkpoint final_ck = loop.run(out_dir);
  const double final_loss = loop.eval_mit_loss();
  std::printf("done: %lld iterations, final transfer loss %.6f\n",
              static_cast<long long>(final_ck.iteration), final_loss);
  std::printf("checkpoint: %s\n",
              (fs::path(out_dir) / "final.ckpt").string().c_str());
  return 0;
}

void write_feature_mean(const Tensor& f, const std::string& path) {
  // channel-averaged map, min-max normalized for viewing
  const int c = f.shape[0], h = f.shape[1], w = f.shape[2];
  GrayImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) acc += f.at3(ch, y, x);
      img.at(y, x) = acc / c;
    }
  double lo = img.data[0], hi = img.data[0];
  for (double v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  for (double& v : img.data) v = span > 0.0 ? (v - lo) / span : 0.5;
  save_png(img, path);
}

int cmd_fuse(const std::string& ir_path, const std::string& vis_path,
             const std::string& ckpt_path, const std::string& out_path,
             bool save_intermediates, bool force_gray) {
  LoadedImage ir = load_image(ir_path);
  LoadedImage vis = load_image(vis_path);
  if (!force_gray && (ir.channels > 1 || vis.channels > 1))
    throw ValidationError(
        "color input; this is a grayscale pipeline, pass --force-gray to "
        "convert via luminance");
  require(ir.gray.height == vis.gray.height && ir.gray.width == vis.gray.width,
          "fuse: ir and vis dimensions differ");

  FusionModel model = build_model_from_checkpoint(load_checkpoint(ckpt_path));
  ForwardResult fr =
      model.forward(make_dual_input(ir.gray), make_dual_input(vis.gray));
  save_png(gray_from_tensor(fr.fused.val()), out_path);

  if (save_intermediates) {
    const fs::path base = fs::path(out_path).parent_path();
    const std::string stem = fs::path(out_path).stem().string();
    auto name = [&](const std::string& suffix) {
      return (base / (stem + "_" + suffix + ".png")).string();
    };
    write_feature_mean(fr.mit.f_ir.val(), name("feat_ir"));
    write_feature_mean(fr.mit.f_vis.val(), name("feat_vis"));
    write_feature_mean(fr.mit.f_vis2ir.val(), name("feat_vis2ir"));
    write_feature_mean(fr.mit.f_ir2vis.val(), name("feat_ir2vis"));
    if (model.cfg.use_siphia) {
      const std::pair<const SiphiaOutputs*, std::string> insts[] = {
          {&fr.sip_ir, "ir"}, {&fr.sip_vis, "vis"}};
      for (const auto& [sip, tag] : insts) {
        save_png(gray_from_tensor(sip->rec1.val()), name(tag + "_rec1"));
        save_png(gray_from_tensor(sip->rec2.val()), name(tag + "_rec2"));
        save_png(gray_from_tensor(sip->edge1.val()), name(tag + "_edge1"));
        save_png(gray_from_tensor(sip->edge2.val()), name(tag + "_edge2"));
        save_png(gray_from_tensor(sip->rec_en.val()), name(tag + "_rec_en"));
      }
    }
  }
  return 0;
}

int cmd_eval(const std::string& fused_dir, const std::string& ir_dir,
             const std::string& vis_dir, const std::string& out_csv,
             int jobs) {
  MetricsReport report = evaluate_corpus(fused_dir, ir_dir, vis_dir, jobs);
  if (!report.unmatched.empty()) {
    std::fprintf(stderr, "unmatched files skipped:\n");
    for (const auto& n : report.unmatched)
      std::fprintf(stderr, "  %s\n", n.c_str());
  }
  if (report.rows.empty())
    throw ValidationError("eval: no matched (fused, ir, vis) triples");

  if (!out_csv.empty()) {
    std::ofstream out(out_csv, std::ios::trunc);
    if (!out) throw IoError("cannot write csv: " + out_csv);
    out << report_to_csv(report);
  }
  std::fputs(report_to_table(report).c_str(), stdout);
  return report.unmatched.empty() ? 0 : 1;
}

int cmd_inspect(const std::string& ckpt_path) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  std::printf("iteration: %lld\n", static_cast<long long>(ck.iteration));
  std::printf("config:\n");
  for (const auto& [k, v] : ck.config)
    std::printf("  %s = %s\n", k.c_str(), v.c_str());
  std::printf("tensors: %zu\n", ck.tensors.size());
  for (const auto& [k, t] : ck.tensors)
    std::printf("  %-36s %s\n", k.c_str(), shape_str(t.shape).c_str());
  for (const auto& [name, st] : ck.adam)
    std::printf("optimizer %s: step %lld, %zu moment tensors\n", name.c_str(),
                static_cast<long long>(st.step), st.m.size() + st.v.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"infrared-visible image fusion: train, fuse, evaluate"};
  app.require_subcommand(1);

  std::string config_path, resume_path, out_dir = "out";
  auto* train = app.add_subcommand("train", "run the training loop");
  train->add_option("--config", config_path, "key=value config file")
      ->required();
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_option("--out", out_dir, "output directory (checkpoints, log)");

  std::string ir_path, vis_path, ckpt_path, fuse_out;
  bool save_intermediates = false, force_gray = false;
  auto* fuse = app.add_subcommand("fuse", "fuse one registered pair");
  fuse->add_option("--ir", ir_path, "infrared image")->required();
  fuse->add_option("--vis", vis_path, "visible image")->required();
  fuse->add_option("--checkpoint", ckpt_path, "trained checkpoint")
      ->required();
  fuse->add_option("--out", fuse_out, "output png")->required();
  fuse->add_flag("--save-intermediates", save_intermediates,
                 "also write auxiliary reconstructions and feature maps");
  fuse->add_flag("--force-gray", force_gray,
                 "accept color inputs, converting by luminance");

  std::string fused_dir, eval_ir_dir, eval_vis_dir, out_csv;
  int jobs = 1;
  auto* eval = app.add_subcommand("eval", "six-metric corpus evaluation");
  eval->add_option("--fused", fused_dir, "directory of fused images")
      ->required();
  eval->add_option("--ir", eval_ir_dir, "directory of infrared sources")
      ->required();
  eval->add_option("--vis", eval_vis_dir, "directory of visible sources")
      ->required();
  eval->add_option("--out", out_csv, "csv report path");
  eval->add_option("--jobs", jobs, "worker threads (default 1)");

  std::string inspect_ckpt;
  auto* inspect = app.add_subcommand("inspect", "print checkpoint manifest");
  inspect->add_option("--checkpoint", inspect_ckpt, "checkpoint file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (*train) return cmd_train(config_path, resume_path, out_dir);
    if (*fuse)
      return cmd_fuse(ir_path, vis_path, ckpt_path, fuse_out,
                      save_intermediates, force_gray);
    if (*eval)
      return cmd_eval(fused_dir, eval_ir_dir, eval_vis_dir, out_csv, jobs);
    if (*inspect) return cmd_inspect(inspect_ckpt);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
