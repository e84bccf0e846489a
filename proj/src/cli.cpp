// SPDX-License-Identifier: Apache-2.0
#include "lhg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include "lhg/image_io.hpp"
#include "lhg/metrics.hpp"
#include "lhg/plot.hpp"
#include "lhg/trainer.hpp"

namespace lhg {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed while writing " + path.string());
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw Error(std::string("invalid ") + what + ": '" + text + "'");
    }
  }
  return values;
}

// ----- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int n = 200;
  DyadConfig dyad;
  std::string split = "0.8,0.1,0.1";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto f = parse_list(a.split, "split");
  if (f.size() != 3) throw Error("--split takes three comma-separated fractions");
  const std::array<double, 3> fractions{f[0], f[1], f[2]};
  const auto sizes = split_sizes(a.n, fractions);
  fs::create_directories(a.out);
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < a.n; ++i) {
    DyadConfig cfg = a.dyad;
    cfg.seed = a.dyad.seed + static_cast<std::uint64_t>(i);
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04d", i);
    write_sample(generate_dyad(cfg), fs::path(a.out) / name);
    const char* split = i < sizes[0] ? "train" : (i < sizes[0] + sizes[1] ? "val" : "test");
    entries.push_back({split, name});
  }
  write_manifest(entries, fs::path(a.out) / "manifest.txt");
  out << "wrote " << a.n << " dyads (train " << sizes[0] << ", val " << sizes[1] << ", test "
      << sizes[2] << ") to " << a.out << '\n';
  return kExitOk;
}

// ----- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
  int epochs = -1;
};

std::vector<PreparedSample> load_split(const std::vector<ManifestEntry>& entries,
                                       const std::string& split, const TrainConfig& cfg) {
  const auto text = default_text_provider(cfg);
  std::vector<PreparedSample> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(prepare_sample(read_sample(e.dir), text, cfg.model.n_mfcc));
  return out;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.config.empty() == a.resume.empty())
    throw Error("train needs exactly one of --config and --resume");
  const auto entries = read_manifest(a.data);
  TrainConfig cfg = a.resume.empty() ? load_config(a.config) : load_checkpoint(a.resume).config;
  const auto train_set = load_split(entries, "train", cfg);
  const auto val_set = load_split(entries, "val", cfg);
  if (train_set.empty()) throw Error("manifest has no train samples: " + a.data);

  TrainState state = a.resume.empty() ? init_training(cfg, train_set) : load_checkpoint(a.resume);
  if (a.epochs >= 0) state.config.epochs = a.epochs;
  fs::create_directories(a.out);
  train(state, train_set, val_set);
  save_checkpoint(state, fs::path(a.out) / "checkpoint.lhg");
  write_text(fs::path(a.out) / "log.csv", format_log(state.log));
  write_text(fs::path(a.out) / "config.cfg", format_config(state.config));
  if (!state.log.empty()) {
    const auto& last = state.log.back();
    out << "epoch " << last.epoch << ": train_reg " << last.train_reg << ", train_con "
        << last.train_con << ", val_reg " << last.val_reg << ", val_con " << last.val_con << '\n';
  }
  return kExitOk;
}

// ----- infer ---------------------------------------------------------------------

struct InferArgs {
  std::string ckpt, audio, speaker, transcript, listener_init, out;
  std::string text_provider = "stub";
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const TrainState ckpt = load_checkpoint(a.ckpt);
  const auto speaker = load_coefficient_sequence(a.speaker);
  std::optional<CoefficientFrame> init;
  if (!a.listener_init.empty()) init = load_coefficient_sequence(a.listener_init).frames.front();
  const auto provider = make_text_provider(a.text_provider, ckpt.config.model.d_text);
  const auto pred = infer(ckpt, read_wav(a.audio), speaker, read_transcript(a.transcript), init, *provider);
  save_coefficient_sequence(pred, a.out);
  out << "wrote " << pred.size() << " frames to " << a.out << '\n';
  return kExitOk;
}

// ----- eval ----------------------------------------------------------------------

std::vector<std::string> sequence_names(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".csv" && name.find(".emb.csv") == std::string::npos)
      names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<fs::path> frame_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".pgm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

struct ImageScores {
  double ssim = 0.0, psnr = 0.0, cpbd = 0.0;
  int frames = 0, sharp_frames = 0;
};

std::optional<ImageScores> image_scores(const fs::path& pred_dir, const fs::path& gt_dir) {
  if (!fs::is_directory(pred_dir) || !fs::is_directory(gt_dir)) return std::nullopt;
  const auto pred = frame_files(pred_dir);
  const auto gt = frame_files(gt_dir);
  if (pred.empty()) return std::nullopt;
  if (pred.size() != gt.size())
    throw Error("frame count differs between " + pred_dir.string() + " and " + gt_dir.string());
  ImageScores s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].filename() != gt[i].filename())
      throw Error("unpaired frame " + pred[i].filename().string() + " in " + pred_dir.string());
    const GrayImage p = read_gray_image(pred[i]);
    const GrayImage g = read_gray_image(gt[i]);
    s.ssim += ssim(p, g);
    s.psnr += psnr(p, g);
    const auto c = cpbd(p);
    if (!c.no_edges) {
      s.cpbd += c.value;
      ++s.sharp_frames;
    }
    ++s.frames;
  }
  s.ssim /= s.frames;
  s.psnr /= s.frames;
  if (s.sharp_frames > 0) s.cpbd /= s.sharp_frames;
  return s;
}

void add_coefficient_metrics(MetricReport& r, const CoefficientSequence& pred,
                             const CoefficientSequence& gt) {
  r["ExpL1"] = coeff_l1(pred, gt, CoeffPart::expression);
  r["PoseL1"] = coeff_l1(pred, gt, CoeffPart::pose);
  if (pred.size() >= 2) {
    r["ExpFD"] = coeff_frechet(pred, gt, CoeffPart::expression);
    r["PoseFD"] = coeff_frechet(pred, gt, CoeffPart::pose);
  }
}

CoefficientSequence concat(const std::vector<CoefficientSequence>& parts) {
  CoefficientSequence all;
  for (const auto& p : parts) all.frames.insert(all.frames.end(), p.frames.begin(), p.frames.end());
  return all;
}

struct EvalArgs {
  std::string pred, gt, out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto names = sequence_names(a.gt);
  if (names.empty()) throw Error("no coefficient CSV files in " + a.gt);
  std::string text;
  std::vector<CoefficientSequence> all_pred, all_gt;
  std::vector<MetricReport> reports;
  Matrix emb_pred, emb_gt;
  for (const auto& name : names) {
    const fs::path pred_csv = fs::path(a.pred) / (name + ".csv");
    if (!fs::exists(pred_csv)) throw Error("missing prediction " + pred_csv.string());
    const auto pred = load_coefficient_sequence(pred_csv);
    const auto gt = load_coefficient_sequence(fs::path(a.gt) / (name + ".csv"));
    if (pred.size() != gt.size())
      throw Error(name + ": prediction has " + std::to_string(pred.size()) +
                  " frames, ground truth has " + std::to_string(gt.size()));
    MetricReport r;
    add_coefficient_metrics(r, pred, gt);
    if (const auto img = image_scores(fs::path(a.pred) / (name + "_frames"),
                                      fs::path(a.gt) / (name + "_frames"))) {
      r["SSIM"] = img->ssim;
      r["PSNR"] = img->psnr;
      if (img->sharp_frames > 0) r["CPBD"] = img->cpbd;
    }
    const fs::path pe = fs::path(a.pred) / (name + ".emb.csv");
    const fs::path ge = fs::path(a.gt) / (name + ".emb.csv");
    if (fs::exists(pe) && fs::exists(ge)) {
      const auto p = load_embedding_set(pe);
      const auto g = load_embedding_set(ge);
      r["CSIM"] = csim(p, g);
      if (p.vectors.rows() >= 2) r["FID"] = embedding_fid(p, g);
      if (emb_pred.size() == 0) {
        emb_pred = p.vectors;
        emb_gt = g.vectors;
      } else if (emb_pred.cols() == p.vectors.cols()) {
        emb_pred.conservativeResize(emb_pred.rows() + p.vectors.rows(), Eigen::NoChange);
        emb_pred.bottomRows(p.vectors.rows()) = p.vectors;
        emb_gt.conservativeResize(emb_gt.rows() + g.vectors.rows(), Eigen::NoChange);
        emb_gt.bottomRows(g.vectors.rows()) = g.vectors;
      }
    }
    text += "[" + name + "]\n" + format_report(r) + "\n";
    reports.push_back(std::move(r));
    all_pred.push_back(pred);
    all_gt.push_back(gt);
  }
  // Aggregate: image metrics and CSIM averaged per sequence, coefficient
  // metrics and FID over the pooled frames.
  MetricReport total = average_reports(reports);
  add_coefficient_metrics(total, concat(all_pred), concat(all_gt));
  if (emb_pred.rows() >= 2)
    total["FID"] = embedding_fid({emb_pred, "pred"}, {emb_gt, "gt"});
  text += "[all]\n" + format_report(total);
  out << text;
  if (!a.out.empty()) write_text(a.out, text);
  return kExitOk;
}

// ----- gradcheck -----------------------------------------------------------------

struct GradArgs {
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  std::string init = "random";
  std::string corrupt_block;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  if (a.init != "random" && a.init != "zero") throw Error("--init must be random or zero");
  const TrainConfig cfg = gradcheck_config();
  std::vector<DyadicSample> samples;
  for (int i = 0; i < 2; ++i) {
    DyadConfig d;
    d.seed = derive_seed(a.seed, static_cast<std::uint64_t>(i));
    d.duration_s = (8.0 - 2 * i) / d.fps;
    d.sample_rate = 8000;
    samples.push_back(generate_dyad(d));
  }
  GradCheckOptions opts;
  opts.tolerance = a.tolerance;
  opts.zero_init = a.init == "zero";
  opts.init_seed = a.seed;
  opts.corrupt_block = a.corrupt_block;
  const auto report = gradient_check(cfg, samples, opts);
  out << format_gradcheck(report);
  return report.passed ? kExitOk : kExitCheckFailed;
}

// ----- plot ----------------------------------------------------------------------

struct PlotArgs {
  std::string pred, gt, out, dims;
  int width = 480, height = 90;
};

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  const auto pred = load_coefficient_sequence(a.pred);
  std::optional<CoefficientSequence> gt;
  if (!a.gt.empty()) gt = load_coefficient_sequence(a.gt);
  PlotOptions opts;
  opts.panel_width = a.width;
  opts.panel_height = a.height;
  if (!a.dims.empty())
    for (double d : parse_list(a.dims, "--dims")) {
      if (d != std::floor(d)) throw Error("--dims takes integer row indices");
      opts.dims.push_back(static_cast<int>(d));
    }
  write_trajectory_plot(pred, gt ? &*gt : nullptr, a.out, opts);
  out << "wrote " << a.out << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Listener head motion generation: synthesis, training, inference and evaluation",
               "lhg"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic speaker/listener dyads");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--n", synth.n, "Number of dyads")->capture_default_str();
  s->add_option("--seed", synth.dyad.seed, "Base seed; dyad i uses seed + i")->capture_default_str();
  s->add_option("--duration", synth.dyad.duration_s, "Clip length in seconds")->capture_default_str();
  s->add_option("--fps", synth.dyad.fps, "Video frame rate")->capture_default_str();
  s->add_option("--sample-rate", synth.dyad.sample_rate, "Audio sample rate in Hz")->capture_default_str();
  s->add_option("--coupling-nod", synth.dyad.coupling_nod, "Listener pitch coupling to speaker energy")
      ->capture_default_str();
  s->add_option("--coupling-expr", synth.dyad.coupling_expr,
                "Listener expression coupling to the speaker")
      ->capture_default_str();
  s->add_option("--lag", synth.dyad.lag_frames, "Reaction lag in frames")->capture_default_str();
  s->add_option("--noise", synth.dyad.noise_sigma, "Listener noise standard deviation")
      ->capture_default_str();
  s->add_option("--split", synth.split, "train,val,test fractions")->capture_default_str();

  TrainArgs train_args;
  auto* t = app.add_subcommand("train", "Train a model on a synthesized dataset");
  t->add_option("--config", train_args.config, "key = value training configuration");
  t->add_option("--data", train_args.data, "Dataset manifest")->required();
  t->add_option("--out", train_args.out, "Output directory (checkpoint.lhg, log.csv, config.cfg)")
      ->required();
  t->add_option("--resume", train_args.resume, "Continue from this checkpoint");
  t->add_option("--epochs", train_args.epochs, "Override the total epoch count");

  InferArgs infer_args;
  auto* i = app.add_subcommand("infer", "Predict listener coefficients for one speaker clip");
  i->add_option("--ckpt", infer_args.ckpt, "Checkpoint")->required();
  i->add_option("--audio", infer_args.audio, "Speaker WAV")->required();
  i->add_option("--speaker", infer_args.speaker, "Speaker coefficient CSV")->required();
  i->add_option("--transcript", infer_args.transcript, "Speaker transcript")->required();
  i->add_option("--listener-init", infer_args.listener_init,
                "CSV whose first frame is the listener's reference frame");
  i->add_option("--text-provider", infer_args.text_provider, "stub or file:<path>")
      ->capture_default_str();
  i->add_option("--out", infer_args.out, "Output coefficient CSV")->required();

  EvalArgs eval_args;
  auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--pred", eval_args.pred, "Prediction directory")->required();
  e->add_option("--gt", eval_args.gt, "Ground-truth directory")->required();
  e->add_option("--out", eval_args.out, "Also write the report to this file");

  GradArgs grad_args;
  auto* g = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  g->add_option("--tolerance", grad_args.tolerance, "Maximum relative error")->capture_default_str();
  g->add_option("--seed", grad_args.seed, "Seed for data and initialization")->capture_default_str();
  g->add_option("--init", grad_args.init, "random or zero")->capture_default_str();
  g->add_option("--corrupt-block", grad_args.corrupt_block,
                "Negate this block's analytic gradient (fault injection)");

  PlotArgs plot_args;
  auto* p = app.add_subcommand("plot", "Draw predicted and ground-truth trajectories to PNG");
  p->add_option("--pred", plot_args.pred, "Predicted coefficient CSV")->required();
  p->add_option("--gt", plot_args.gt, "Ground-truth coefficient CSV");
  p->add_option("--out", plot_args.out, "Output PNG")->required();
  p->add_option("--dims", plot_args.dims, "Comma-separated motion rows (0-63 expression, 64-69 pose)");
  p->add_option("--width", plot_args.width, "Panel width in pixels")->capture_default_str();
  p->add_option("--height", plot_args.height, "Panel height in pixels")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train_args, out);
    if (*i) return cmd_infer(infer_args, out);
    if (*e) return cmd_eval(eval_args, out);
    if (*g) return cmd_gradcheck(grad_args, out);
    if (*p) return cmd_plot(plot_args, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace lhg
