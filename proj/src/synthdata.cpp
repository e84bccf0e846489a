// SPDX-License-Identifier: Apache-2.0
#include "lhg/synthdata.hpp"

#include <fstream>
#include <sstream>

namespace lhg {
namespace {

constexpr double kSpeakerProcessCorrelation = 0.9;
constexpr double kNoiseCorrelation = 0.9;
constexpr double kRampSeconds = 0.01;

enum StreamTag : std::uint64_t { kAudioStream = 1, kSpeakerStream = 2, kNoiseStream = 3 };

/// Stationary AR(1) series with the given standard deviation.
Vector ar1(Rng& rng, int n, double rho, double sigma) {
  Vector x(n);
  if (n == 0) return x;
  x[0] = sigma * rng.normal();
  const double innovation = sigma * std::sqrt(1.0 - rho * rho);
  for (int t = 1; t < n; ++t) x[t] = rho * x[t - 1] + innovation * rng.normal();
  return x;
}

double burst_frequency(std::size_t word) { return 160.0 * std::pow(1.3, static_cast<double>(word)); }

}  // namespace

const std::vector<std::string>& synth_vocabulary() {
  static const std::vector<std::string> words = {"ba", "de", "gi", "ko", "mu", "pa", "te", "zu"};
  return words;
}

void validate(const DyadConfig& cfg) {
  if (!(cfg.duration_s > 0.0)) throw Error("duration_s must be positive");
  if (!(cfg.fps > 0.0)) throw Error("fps must be positive");
  if (cfg.sample_rate < 8000) throw Error("sample_rate must be at least 8000 Hz");
  if (cfg.coupling_nod < 0.0 || cfg.coupling_nod > 1.0) throw Error("coupling_nod must be in [0, 1]");
  if (cfg.coupling_expr < 0.0 || cfg.coupling_expr > 1.0)
    throw Error("coupling_expr must be in [0, 1]");
  if (cfg.lag_frames < 0) throw Error("lag_frames must be non-negative");
  if (cfg.noise_sigma < 0.0) throw Error("noise_sigma must be non-negative");
  if (video_frame_count(cfg.duration_s, cfg.fps) < 1) throw Error("duration shorter than one frame");
}

Vector moving_average(const Vector& x, int width) {
  const int n = static_cast<int>(x.size());
  const int half = width / 2;
  Vector out(n);
  for (int t = 0; t < n; ++t) {
    double sum = 0.0;
    for (int k = -half; k <= half; ++k) sum += x[std::clamp(t + k, 0, n - 1)];
    out[t] = sum / (2 * half + 1);
  }
  return out;
}

double pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("pearson: need equal lengths >= 2");
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  const double denom = ca.norm() * cb.norm();
  if (denom == 0.0) throw Error("pearson: constant input");
  return ca.dot(cb) / denom;
}

DyadicSample generate_dyad(const DyadConfig& cfg) {
  validate(cfg);
  const int frames = video_frame_count(cfg.duration_s, cfg.fps);
  const auto n_samples =
      static_cast<Eigen::Index>(std::ceil(cfg.duration_s * cfg.sample_rate - 1e-6));
  const int n_tokens = std::max(1, frames / kFramesPerToken);
  const auto& vocab = synth_vocabulary();

  DyadicSample sample;

  // Speaker audio: one enveloped harmonic burst per token segment.
  Rng audio_rng(derive_seed(cfg.seed, kAudioStream));
  Vector envelope = Vector::Zero(n_samples);
  Vector tone = Vector::Zero(n_samples);
  const double ramp = kRampSeconds * cfg.sample_rate;
  for (int i = 0; i < n_tokens; ++i) {
    const std::size_t word = static_cast<std::size_t>(audio_rng.below(vocab.size()));
    const double amplitude = audio_rng.uniform(0.2, 0.5);
    const double fill = audio_rng.uniform(0.5, 0.9);
    const double onset_fraction = audio_rng.uniform(0.0, 0.1);
    const double phase = audio_rng.uniform(0.0, 2.0 * M_PI);
    sample.transcript_tokens.push_back(vocab[word]);

    const auto [lo, hi] = token_frame_span(i, n_tokens, frames);
    const double seg_start = lo / cfg.fps * cfg.sample_rate;
    const double seg_len = (hi - lo) / cfg.fps * cfg.sample_rate;
    const double start = seg_start + onset_fraction * seg_len;
    const double stop = start + fill * seg_len;
    const double freq = burst_frequency(word);
    for (auto n = static_cast<Eigen::Index>(std::ceil(start));
         n < std::min<Eigen::Index>(n_samples, static_cast<Eigen::Index>(std::ceil(stop))); ++n) {
      const double pos = static_cast<double>(n);
      const double edge = std::min(pos - start, stop - pos);
      const double shape =
          edge >= ramp ? 1.0 : 0.5 - 0.5 * std::cos(M_PI * std::max(0.0, edge) / ramp);
      envelope[n] = amplitude * shape;
      const double phi = 2.0 * M_PI * freq * pos / cfg.sample_rate + phase;
      tone[n] = (std::sin(phi) + 0.5 * std::sin(2 * phi) + 0.25 * std::sin(3 * phi)) / 1.75;
    }
  }
  sample.speaker_audio.sample_rate = cfg.sample_rate;
  sample.speaker_audio.samples = envelope.cwiseProduct(tone);

  sample.energy = Vector::Zero(frames);
  for (int t = 0; t < frames; ++t) {
    const auto lo = static_cast<Eigen::Index>(std::llround(t / cfg.fps * cfg.sample_rate));
    const auto hi = std::min<Eigen::Index>(
        n_samples, static_cast<Eigen::Index>(std::llround((t + 1) / cfg.fps * cfg.sample_rate)));
    if (hi > lo) sample.energy[t] = envelope.segment(lo, hi - lo).mean();
  }
  const Vector smooth_energy = moving_average(sample.energy, kEnvelopeSmoothing);

  // Speaker coefficients: smooth random trajectories.
  Rng speaker_rng(derive_seed(cfg.seed, kSpeakerStream));
  Matrix speaker(kMotionDim, frames);
  for (int d = 0; d < kMotionDim; ++d) {
    const double scale = d < kMirroredExpressionDims ? 0.4 : (d < kExpressionDim ? 0.15 : 0.1);
    speaker.row(d) = ar1(speaker_rng, frames, kSpeakerProcessCorrelation, scale).transpose();
  }
  speaker.topRows(kExpressionDim) = speaker.topRows(kExpressionDim).cwiseMax(-1.0).cwiseMin(1.0);
  speaker.bottomRows(kPoseDim) = speaker.bottomRows(kPoseDim).cwiseMax(-0.5).cwiseMin(0.5);

  // Listener: lagged responses plus smooth noise on the coupled coefficients.
  // The remaining coefficients stay at zero.
  Rng noise_rng(derive_seed(cfg.seed, kNoiseStream));
  Matrix listener = Matrix::Zero(kMotionDim, frames);
  for (int d = 0; d < kMirroredExpressionDims; ++d)
    listener.row(d) = ar1(noise_rng, frames, kNoiseCorrelation, cfg.noise_sigma).transpose();
  listener.row(kExpressionDim) = ar1(noise_rng, frames, kNoiseCorrelation, cfg.noise_sigma).transpose();
  for (int t = 0; t < frames; ++t) {
    const int src = std::max(0, t - cfg.lag_frames);
    listener.col(t).head(kMirroredExpressionDims) +=
        cfg.coupling_expr * speaker.col(src).head(kMirroredExpressionDims);
    listener(kExpressionDim, t) += cfg.coupling_nod * smooth_energy[src];
  }
  listener.topRows(kExpressionDim) = listener.topRows(kExpressionDim).cwiseMax(-1.0).cwiseMin(1.0);
  listener.bottomRows(kPoseDim) = listener.bottomRows(kPoseDim).cwiseMax(-0.5).cwiseMin(0.5);

  sample.speaker_coeffs = from_motion_matrix(speaker, cfg.fps);
  sample.listener_coeffs = from_motion_matrix(listener, cfg.fps);
  return sample;
}

std::array<int, 3> split_sizes(int n, const std::array<double, 3>& fractions) {
  double sum = 0.0;
  int nonzero = 0;
  for (double f : fractions) {
    if (f < 0.0) throw Error("split fractions must be non-negative");
    sum += f;
    nonzero += f > 0.0 ? 1 : 0;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
  if (n < 1) throw Error("dataset size must be positive");
  if (n < nonzero) throw Error("dataset too small for " + std::to_string(nonzero) + " non-empty splits");
  const int val = static_cast<int>(std::lround(n * fractions[1]));
  const int test = static_cast<int>(std::lround(n * fractions[2]));
  if (val + test > n) throw Error("split fractions leave no room for the training split");
  return {n - val - test, val, test};
}

DatasetSplit generate_dataset(const DyadConfig& base, int n, const std::array<double, 3>& fractions) {
  const auto sizes = split_sizes(n, fractions);
  DatasetSplit split;
  for (int i = 0; i < n; ++i) {
    DyadConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(i);
    auto sample = generate_dyad(cfg);
    if (i < sizes[0])
      split.train.push_back(std::move(sample));
    else if (i < sizes[0] + sizes[1])
      split.val.push_back(std::move(sample));
    else
      split.test.push_back(std::move(sample));
  }
  return split;
}

void write_sample(const DyadicSample& sample, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_wav(sample.speaker_audio, dir / "audio.wav");
  save_coefficient_sequence(sample.speaker_coeffs, dir / "speaker.csv");
  save_coefficient_sequence(sample.listener_coeffs, dir / "listener.csv");
  std::ofstream out(dir / "transcript.txt", std::ios::trunc);
  for (std::size_t i = 0; i < sample.transcript_tokens.size(); ++i)
    out << (i ? " " : "") << sample.transcript_tokens[i];
  out << '\n';
  if (!out) throw Error("cannot write transcript in " + dir.string());
}

DyadicSample read_sample(const std::filesystem::path& dir) {
  DyadicSample sample;
  sample.speaker_audio = read_wav(dir / "audio.wav");
  sample.speaker_coeffs = load_coefficient_sequence(dir / "speaker.csv");
  sample.listener_coeffs = load_coefficient_sequence(dir / "listener.csv");
  sample.transcript_tokens = read_transcript(dir / "transcript.txt");
  return sample;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest: " + path.string());
  out << "# split\tdirectory\n";
  for (const auto& e : entries) out << e.split << '\t' << e.dir.generic_string() << '\n';
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(path.string() + ": line " + std::to_string(line_no) + ": expected split<TAB>dir");
    ManifestEntry e{line.substr(0, tab), line.substr(tab + 1)};
    if (e.split != "train" && e.split != "val" && e.split != "test")
      throw Error(path.string() + ": line " + std::to_string(line_no) + ": unknown split '" +
                  e.split + "'");
    if (e.dir.is_relative()) e.dir = path.parent_path() / e.dir;
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace lhg
