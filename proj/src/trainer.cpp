// SPDX-License-Identifier: Apache-2.0
#include "lhg/trainer.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace lhg {

ObjectiveOptions TrainConfig::objective() const {
  ObjectiveOptions o;
  o.weights = {w1, w2};
  o.squared_norm = squared_norm;
  o.tau = tau;
  o.k_negatives = k_negatives;
  o.lambda_contrastive = lambda_contrastive;
  o.max_steps = t_train;
  return o;
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw Error("epochs must be non-negative");
  if (cfg.batch_size < 1) throw Error("batch_size must be positive");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw Error("learning_rate must be a non-negative number");
  if (!(cfg.tau > 0.0)) throw Error("tau must be positive");
  if (cfg.k_negatives < 1) throw Error("k_negatives must be positive");
  if (cfg.w1 < 0.0 || cfg.w2 < 0.0) throw Error("w1 and w2 must be non-negative");
  if (cfg.lambda_contrastive < 0.0) throw Error("lambda_contrastive must be non-negative");
  if (cfg.pretrain_epochs < 0) throw Error("pretrain_epochs must be non-negative");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw Error("beta1 and beta2 must be in [0, 1)");
  if (!(cfg.adam_epsilon > 0.0)) throw Error("adam_epsilon must be positive");
  if (cfg.t_train < 2) throw Error("t_train must be at least 2");
  validate(cfg.model);
}

std::string stage_name(TrainStage stage) {
  return stage == TrainStage::joint ? "joint" : "pretrain-encoder-then-decoder";
}

std::string optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

// ----- config text ---------------------------------------------------------

namespace {

std::string number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size())
    throw Error("config: invalid value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error("config: " + key + " expects true or false, got '" + value + "'");
}

}  // namespace

std::string format_config(const TrainConfig& c) {
  const auto& m = c.model;
  std::ostringstream out;
  out << "epochs = " << c.epochs << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "learning_rate = " << number(c.learning_rate) << '\n'
      << "tau = " << number(c.tau) << '\n'
      << "k_negatives = " << c.k_negatives << '\n'
      << "w1 = " << number(c.w1) << '\n'
      << "w2 = " << number(c.w2) << '\n'
      << "lambda_contrastive = " << number(c.lambda_contrastive) << '\n'
      << "seed = " << c.seed << '\n'
      << "stage = " << stage_name(c.stage) << '\n'
      << "pretrain_epochs = " << c.pretrain_epochs << '\n'
      << "optimizer = " << optimizer_name(c.optimizer) << '\n'
      << "beta1 = " << number(c.beta1) << '\n'
      << "beta2 = " << number(c.beta2) << '\n'
      << "adam_epsilon = " << number(c.adam_epsilon) << '\n'
      << "squared_norm = " << (c.squared_norm ? "true" : "false") << '\n'
      << "t_train = " << c.t_train << '\n'
      << "n_mfcc = " << m.n_mfcc << '\n'
      << "encoder_widths = " << m.encoder_widths[0] << ',' << m.encoder_widths[1] << ','
      << m.encoder_widths[2] << '\n'
      << "d_proj = " << m.d_proj << '\n'
      << "d_text = " << m.d_text << '\n'
      << "d_fused = " << m.d_fused << '\n'
      << "d_xm = " << m.d_xm << '\n'
      << "hidden = " << m.hidden << '\n'
      << "layers = " << m.layers << '\n'
      << "use_init = " << (m.use_init ? "true" : "false") << '\n'
      << "residual = " << (m.residual ? "true" : "false") << '\n';
  return out.str();
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  auto& m = c.model;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters;
  auto int_field = [&](const char* key, int& field) {
    setters[key] = [&field](const std::string& k, const std::string& v) { field = parse_number<int>(k, v); };
  };
  auto real_field = [&](const char* key, double& field) {
    setters[key] = [&field](const std::string& k, const std::string& v) { field = parse_number<double>(k, v); };
  };
  auto bool_field = [&](const char* key, bool& field) {
    setters[key] = [&field](const std::string& k, const std::string& v) { field = parse_bool(k, v); };
  };
  int_field("epochs", c.epochs);
  int_field("batch_size", c.batch_size);
  real_field("learning_rate", c.learning_rate);
  real_field("tau", c.tau);
  int_field("k_negatives", c.k_negatives);
  real_field("w1", c.w1);
  real_field("w2", c.w2);
  real_field("lambda_contrastive", c.lambda_contrastive);
  setters["seed"] = [&](const std::string& k, const std::string& v) {
    c.seed = parse_number<std::uint64_t>(k, v);
  };
  setters["stage"] = [&](const std::string& k, const std::string& v) {
    if (v == "joint")
      c.stage = TrainStage::joint;
    else if (v == "pretrain-encoder-then-decoder")
      c.stage = TrainStage::pretrain_then_decoder;
    else
      throw Error("config: " + k + " must be joint or pretrain-encoder-then-decoder, got '" + v + "'");
  };
  int_field("pretrain_epochs", c.pretrain_epochs);
  setters["optimizer"] = [&](const std::string& k, const std::string& v) {
    if (v == "adam")
      c.optimizer = OptimizerKind::adam;
    else if (v == "sgd")
      c.optimizer = OptimizerKind::sgd;
    else
      throw Error("config: " + k + " must be adam or sgd, got '" + v + "'");
  };
  real_field("beta1", c.beta1);
  real_field("beta2", c.beta2);
  real_field("adam_epsilon", c.adam_epsilon);
  bool_field("squared_norm", c.squared_norm);
  int_field("t_train", c.t_train);
  int_field("n_mfcc", m.n_mfcc);
  setters["encoder_widths"] = [&](const std::string& k, const std::string& v) {
    std::stringstream ss(v);
    std::string part;
    std::size_t i = 0;
    while (std::getline(ss, part, ',')) {
      if (i == 3) throw Error("config: " + k + " takes exactly three widths");
      m.encoder_widths[i++] = parse_number<int>(k, trim(part));
    }
    if (i != 3) throw Error("config: " + k + " takes exactly three widths");
  };
  int_field("d_proj", m.d_proj);
  int_field("d_text", m.d_text);
  int_field("d_fused", m.d_fused);
  int_field("d_xm", m.d_xm);
  int_field("hidden", m.hidden);
  int_field("layers", m.layers);
  bool_field("use_init", m.use_init);
  bool_field("residual", m.residual);

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end())
      throw Error("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  validate(c);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_log(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_reg,train_con,val_reg,val_con\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_reg, e.train_con,
                  e.val_reg, e.val_con);
    out += buf;
  }
  return out;
}

// ----- training --------------------------------------------------------------

namespace {

enum SeedTag : std::uint64_t { kInitTag = 1, kTrainerTag = 2, kValidationTag = 3 };

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  visit_blocks(z, [](const std::string&, auto& block) { block.setZero(); });
  return z;
}

std::vector<const PreparedSample*> pointers(std::span<const PreparedSample> set) {
  std::vector<const PreparedSample*> out;
  for (const auto& s : set) out.push_back(&s);
  return out;
}

bool is_encoder_block(const std::string& name) { return name.rfind("encoder.", 0) == 0; }

}  // namespace

TrainState init_training(const TrainConfig& cfg, std::span<const PreparedSample> train) {
  validate(cfg);
  TrainState s;
  s.config = cfg;
  s.params = make_model(cfg.model);
  Rng init_rng(derive_seed(cfg.seed, kInitTag));
  init_uniform(s.params, init_rng);
  s.stats = compute_stats(train);
  seed_output_bias(s.params, s.stats);
  s.adam_m = zeros_like(s.params);
  s.adam_v = zeros_like(s.params);
  s.rng = Rng(derive_seed(cfg.seed, kTrainerTag));
  return s;
}

BatchLoss evaluate_set(const TrainState& state, std::span<const PreparedSample> set) {
  if (set.empty()) return {};
  const auto& cfg = state.config;
  const auto all = pointers(set);
  const std::uint64_t base = derive_seed(cfg.seed, kValidationTag);
  BatchLoss total;
  for (std::size_t start = 0, batch = 0; start < all.size(); start += cfg.batch_size, ++batch) {
    const std::size_t n = std::min<std::size_t>(cfg.batch_size, all.size() - start);
    const std::span<const PreparedSample* const> chunk(all.data() + start, n);
    const BatchLoss l = evaluate_batch(state.params, state.stats, chunk, cfg.objective(),
                                       derive_seed(base, batch), nullptr);
    total.regression += l.regression * static_cast<double>(n);
    total.contrastive += l.contrastive * static_cast<double>(n);
    total.total += l.total * static_cast<double>(n);
  }
  const double inv = 1.0 / static_cast<double>(all.size());
  total.regression *= inv;
  total.contrastive *= inv;
  total.total *= inv;
  return total;
}

void train(TrainState& state, std::span<const PreparedSample> train_set,
           std::span<const PreparedSample> val_set, const EpochCallback& on_epoch) {
  const auto& cfg = state.config;
  validate(cfg);
  if (train_set.empty()) throw Error("training set is empty");
  const auto all = pointers(train_set);

  ModelParams grad = zeros_like(state.params);
  auto params = block_views(state.params);
  auto m = block_views(state.adam_m);
  auto v = block_views(state.adam_v);
  auto g = block_views(grad);

  while (state.epoch < cfg.epochs) {
    ObjectiveOptions opts = cfg.objective();
    bool freeze_encoder = false, encoder_only = false;
    if (cfg.stage == TrainStage::pretrain_then_decoder) {
      if (state.epoch < cfg.pretrain_epochs) {
        opts.regression = false;
        encoder_only = true;
      } else {
        opts.lambda_contrastive = 0.0;
        freeze_encoder = true;
      }
    }

    std::vector<const PreparedSample*> order = all;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(state.rng.below(i))]);

    double reg = 0.0, con = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      const std::span<const PreparedSample* const> chunk(order.data() + start, n);
      const std::uint64_t negative_seed = state.rng.next_u64();
      for (auto& b : g) Eigen::Map<Vector>(b.data, b.size()).setZero();
      const BatchLoss loss = evaluate_batch(state.params, state.stats, chunk, opts, negative_seed, &grad);
      if (!std::isfinite(loss.total))
        throw Error("training diverged at epoch " + std::to_string(state.epoch + 1) +
                    ": non-finite loss (regression " + number(loss.regression) + ", contrastive " +
                    number(loss.contrastive) + ")");
      reg += loss.regression * static_cast<double>(n);
      con += loss.contrastive * static_cast<double>(n);

      ++state.step;
      const double t = static_cast<double>(state.step);
      const double c1 = 1.0 - std::pow(cfg.beta1, t);
      const double c2 = 1.0 - std::pow(cfg.beta2, t);
      for (std::size_t i = 0; i < params.size(); ++i) {
        const bool encoder = is_encoder_block(params[i].name);
        if ((freeze_encoder && encoder) || (encoder_only && !encoder)) continue;
        Eigen::Map<Vector> p(params[i].data, params[i].size());
        Eigen::Map<const Vector> gi(g[i].data, g[i].size());
        if (cfg.optimizer == OptimizerKind::sgd) {
          p -= cfg.learning_rate * gi;
          continue;
        }
        Eigen::Map<Vector> mi(m[i].data, m[i].size());
        Eigen::Map<Vector> vi(v[i].data, v[i].size());
        mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi;
        vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * gi.cwiseProduct(gi);
        p.array() -= cfg.learning_rate * (mi.array() / c1) /
                     ((vi.array() / c2).sqrt() + cfg.adam_epsilon);
      }
    }
    for (const auto& b : params)
      if (!Eigen::Map<const Vector>(b.data, b.size()).allFinite())
        throw Error("training diverged at epoch " + std::to_string(state.epoch + 1) +
                    ": non-finite values in " + b.name);

    const double inv = 1.0 / static_cast<double>(order.size());
    const BatchLoss val = evaluate_set(state, val_set);
    ++state.epoch;
    state.log.push_back({state.epoch, reg * inv, con * inv, val.regression, val.contrastive});
    if (on_epoch && !on_epoch(state)) break;
  }
}

// ----- inference -------------------------------------------------------------

StubTextProvider default_text_provider(const TrainConfig& cfg) {
  return StubTextProvider(cfg.model.d_text);
}

CoefficientSequence infer(const TrainState& ckpt, const AudioClip& audio,
                          const CoefficientSequence& speaker,
                          const std::vector<std::string>& tokens,
                          const std::optional<CoefficientFrame>& listener_init,
                          const TextEmbeddingProvider& text) {
  if (text.dim() != ckpt.config.model.d_text)
    throw Error("text provider '" + text.id() + "' yields " + std::to_string(text.dim()) +
                "-dim vectors, the checkpoint expects " + std::to_string(ckpt.config.model.d_text));
  PreparedSample s = prepare_sample(audio, speaker, tokens, text, ckpt.config.model.n_mfcc, nullptr);
  if (listener_init) {
    s.init.resize(kMotionDim);
    s.init << listener_init->beta, listener_init->pose;
  }
  return from_motion_matrix(predict(ckpt.params, ckpt.stats, s), speaker.fps);
}

// ----- gradient check ----------------------------------------------------------

TrainConfig gradcheck_config() {
  TrainConfig c;
  c.k_negatives = 4;
  c.lambda_contrastive = 1.0;
  c.t_train = 8;
  c.model.n_mfcc = 8;
  c.model.encoder_widths = {8, 8, 8};
  c.model.d_proj = 8;
  c.model.d_text = 8;
  c.model.d_fused = 8;
  c.model.d_xm = 8;
  c.model.hidden = 8;
  c.model.layers = 6;
  c.model.use_init = true;
  return c;
}

GradCheckReport gradient_check(const TrainConfig& cfg, std::span<const DyadicSample> samples,
                               const GradCheckOptions& options) {
  validate(cfg);
  if (cfg.model.hidden > 8) throw Error("gradient check requires hidden <= 8");
  if (cfg.t_train > 8) throw Error("gradient check requires t_train <= 8");
  if (samples.empty()) throw Error("gradient check needs at least one sample");
  if (!(options.step > 0.0)) throw Error("finite-difference step must be positive");

  const auto text = default_text_provider(cfg);
  std::vector<PreparedSample> prepared;
  for (const auto& s : samples) prepared.push_back(prepare_sample(s, text, cfg.model.n_mfcc));
  const DataStats stats = compute_stats(prepared);
  const auto batch = pointers(prepared);

  ModelParams params = make_model(cfg.model);
  if (!options.zero_init) {
    Rng rng(derive_seed(options.init_seed, kInitTag));
    init_uniform(params, rng);
  }
  const ObjectiveOptions opts = cfg.objective();
  const std::uint64_t negative_seed = derive_seed(options.init_seed, kTrainerTag);
  ModelParams grad = zeros_like(params);
  evaluate_batch(params, stats, batch, opts, negative_seed, &grad);
  auto loss_at = [&]() { return evaluate_batch(params, stats, batch, opts, negative_seed, nullptr).total; };

  GradCheckReport report;
  report.tolerance = options.tolerance;
  auto views = block_views(params);
  auto gviews = block_views(grad);
  bool corrupt_found = options.corrupt_block.empty();
  for (std::size_t i = 0; i < views.size(); ++i) {
    Eigen::Map<Vector> p(views[i].data, views[i].size());
    Vector analytic = Eigen::Map<const Vector>(gviews[i].data, gviews[i].size());
    if (views[i].name == options.corrupt_block) {
      analytic = -analytic;
      corrupt_found = true;
    }
    Vector numeric(p.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double saved = p[j];
      p[j] = saved + options.step;
      const double up = loss_at();
      p[j] = saved - options.step;
      const double down = loss_at();
      p[j] = saved;
      numeric[j] = (up - down) / (2.0 * options.step);
    }
    BlockCheck check;
    check.name = views[i].name;
    check.max_abs_analytic = analytic.cwiseAbs().maxCoeff();
    check.max_abs_numeric = numeric.cwiseAbs().maxCoeff();
    const double scale = std::max({check.max_abs_analytic, check.max_abs_numeric, 1e-3});
    check.max_rel_error = (analytic - numeric).cwiseAbs().maxCoeff() / scale;
    // NaN compares false, so a non-finite error always becomes the worst.
    if (report.worst_block.empty() || !(check.max_rel_error <= report.worst_error)) {
      report.worst_error = check.max_rel_error;
      report.worst_block = check.name;
    }
    report.blocks.push_back(std::move(check));
  }
  if (!corrupt_found) throw Error("no parameter block named '" + options.corrupt_block + "'");
  report.passed = report.worst_error < options.tolerance;  // false for NaN
  return report;
}

std::string format_gradcheck(const GradCheckReport& report) {
  std::string out;
  char buf[256];
  for (const auto& b : report.blocks) {
    std::snprintf(buf, sizeof buf, "%-36s rel_err=%.3e max|grad|=%.3e\n", b.name.c_str(),
                  b.max_rel_error, b.max_abs_analytic);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%s: worst block %s, rel_err=%.3e, tolerance=%.1e\n",
                report.passed ? "PASS" : "FAIL", report.worst_block.c_str(), report.worst_error,
                report.tolerance);
  out += buf;
  return out;
}

// ----- evaluation helpers ------------------------------------------------------

double mean_abs_pose_delta(const Matrix& motion) {
  if (motion.cols() < 2) throw Error("pose delta needs at least two frames");
  const auto pose = motion.bottomRows(kPoseDim);
  return (pose.rightCols(pose.cols() - 1) - pose.leftCols(pose.cols() - 1)).cwiseAbs().mean();
}

AlignmentStats contrastive_alignment(const TrainState& state, std::span<const PreparedSample> set,
                                     int k, std::uint64_t seed) {
  AlignmentStats stats;
  double pos = 0.0, neg = 0.0;
  long anchors = 0, negatives = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set[i];
    const AlignedFeatures f = aligned_features(state.params, state.stats, s);
    const std::array<const Matrix*, 3> levels{&f.low, &f.mid, &f.high};
    const std::array<int, 1> length{s.length()};
    for (int t = 0; t < s.length(); ++t) {
      if (s.text.col(t).squaredNorm() == 0.0) continue;
      const Vector anchor = f.text.col(t);
      pos += safe_cosine(anchor, f.high.col(t));
      ++anchors;
      const auto refs = sample_negative_refs(length, 0, t, k, derive_seed(derive_seed(seed, i), t));
      for (const auto& r : refs) {
        neg += safe_cosine(anchor, levels[static_cast<std::size_t>(r.level)]->col(r.t));
        ++negatives;
      }
    }
  }
  if (anchors == 0) throw Error("no text anchors in the evaluation set");
  stats.positive = pos / static_cast<double>(anchors);
  stats.negative = negatives > 0 ? neg / static_cast<double>(negatives) : 0.0;
  return stats;
}

}  // namespace lhg
