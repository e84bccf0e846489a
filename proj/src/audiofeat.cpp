// SPDX-License-Identifier: Apache-2.0
#include "lhg/audiofeat.hpp"

#include <complex>
#include <fstream>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace lhg {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

int video_frame_count(double duration, double fps) {
  if (!(fps > 0.0)) throw Error("fps must be positive");
  // The epsilon absorbs round-off in duration = frames / fps.
  return static_cast<int>(std::floor(duration * fps + 1e-9));
}

std::vector<Vector> frame_audio(const AudioClip& clip, double fps, int context_frames) {
  if (!(fps > 0.0)) throw Error("fps must be positive");
  if (context_frames < 0) throw Error("context_frames must be non-negative");
  validate(clip);
  const int count = video_frame_count(clip.duration(), fps);
  if (count < 1) throw Error("clip shorter than one video frame");

  const auto base = static_cast<Eigen::Index>(std::llround(clip.sample_rate / fps));
  const Eigen::Index length = (1 + 2 * context_frames) * base;
  const Eigen::Index n = clip.samples.size();
  std::vector<Vector> windows;
  windows.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) {
    const double center = (t + 0.5) * clip.sample_rate / fps;
    const auto start = static_cast<Eigen::Index>(std::llround(center - length / 2.0));
    Vector w = Vector::Zero(length);
    for (Eigen::Index i = 0; i < length; ++i) {
      const Eigen::Index k = start + i;
      if (k >= 0 && k < n) w[i] = clip.samples[k];
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

Matrix AudioFeatureStack::concatenated() const {
  Matrix out(mfcc.rows(), mfcc.cols() * 3);
  out << mfcc, delta, delta2;
  return out;
}

Matrix mel_filterbank(int n_mels, int n_fft, int sample_rate, double f_low, double f_high) {
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(f_low);
  const double mel_hi = hz_to_mel(f_high);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  Matrix bank = Matrix::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      if (f > left && f < right)
        bank(m, k) = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
    }
  }
  return bank;
}

Matrix dct2_orthonormal(const Matrix& log_energies, int n_keep) {
  const Eigen::Index n = log_energies.cols();
  Matrix basis(n, n_keep);
  for (int k = 0; k < n_keep; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (Eigen::Index i = 0; i < n; ++i)
      basis(i, k) = scale * std::cos(M_PI * k * (2.0 * i + 1.0) / (2.0 * n));
  }
  return log_energies * basis;
}

Matrix regression_delta(const Matrix& rows, int radius) {
  const Eigen::Index t_len = rows.rows();
  double denom = 0.0;
  for (int n = 1; n <= radius; ++n) denom += 2.0 * n * n;
  Matrix out = Matrix::Zero(t_len, rows.cols());
  for (Eigen::Index t = 0; t < t_len; ++t) {
    for (int n = 1; n <= radius; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + n, t_len - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
      out.row(t) += n * (rows.row(ahead) - rows.row(behind));
    }
  }
  return out / denom;
}

AudioFeatureStack mfcc_stack(const AudioClip& clip, double fps, int n_mfcc) {
  MfccOptions options;
  options.n_mfcc = n_mfcc;
  return mfcc_stack(clip, fps, options);
}

AudioFeatureStack mfcc_stack(const AudioClip& clip, double fps, const MfccOptions& options) {
  if (options.n_mfcc < 8 || options.n_mfcc > 40) throw Error("n_mfcc must be in [8, 40]");
  if (options.n_mfcc > options.n_mels) throw Error("n_mfcc exceeds the number of mel filters");
  if (!(fps > 0.0)) throw Error("fps must be positive");
  validate(clip);

  const int win = static_cast<int>(std::lround(options.window_seconds * clip.sample_rate));
  if (clip.samples.size() < win) throw Error("clip shorter than one analysis window");
  const int count = video_frame_count(clip.duration(), fps);
  if (count < 1) throw Error("clip shorter than one video frame");

  const Eigen::Index n = clip.samples.size();
  Vector emphasized(n);
  emphasized[0] = clip.samples[0];
  for (Eigen::Index i = 1; i < n; ++i)
    emphasized[i] = clip.samples[i] - options.preemphasis * clip.samples[i - 1];

  const int n_fft = next_pow2(win);
  std::vector<double> hann(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i)
    hann[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1));
  const Matrix bank = mel_filterbank(options.n_mels, n_fft, clip.sample_rate, 0.0,
                                     clip.sample_rate / 2.0);

  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spectrum;
  Matrix log_mel(count, options.n_mels);
  Vector power(n_fft / 2 + 1);
  for (int t = 0; t < count; ++t) {
    const double center = (t + 0.5) * clip.sample_rate / fps;
    const auto start = static_cast<Eigen::Index>(std::llround(center - win / 2.0));
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int i = 0; i < win; ++i) {
      const Eigen::Index k = start + i;
      if (k >= 0 && k < n) frame[static_cast<std::size_t>(i)] = emphasized[k] * hann[static_cast<std::size_t>(i)];
    }
    fft.fwd(spectrum, frame);
    for (int k = 0; k <= n_fft / 2; ++k) power[k] = std::norm(spectrum[static_cast<std::size_t>(k)]);
    const Vector energies = bank * power;
    for (int m = 0; m < options.n_mels; ++m) log_mel(t, m) = std::log(std::max(energies[m], 1e-10));
  }

  AudioFeatureStack stack;
  stack.fps = fps;
  stack.mfcc = dct2_orthonormal(log_mel, options.n_mfcc);
  stack.delta = regression_delta(stack.mfcc, options.delta_radius);
  stack.delta2 = regression_delta(stack.delta, options.delta_radius);
  return stack;
}

// ---------------------------------------------------------------------------

std::pair<int, int> token_frame_span(int token_index, int n_tokens, int n_frames) {
  const auto lo = static_cast<long long>(token_index) * n_frames / n_tokens;
  const auto hi = static_cast<long long>(token_index + 1) * n_frames / n_tokens;
  return {static_cast<int>(lo), static_cast<int>(hi)};
}

Vector StubTextProvider::token_vector(const std::string& token) const {
  Rng rng(derive_seed(seed_, fnv1a64(token)));
  Vector v(dim_);
  for (int i = 0; i < dim_; ++i) v[i] = rng.normal();
  return v / v.norm();
}

Matrix StubTextProvider::embed(const std::vector<std::string>& tokens, int n_frames) const {
  Matrix out = Matrix::Zero(n_frames, dim_);
  const int n = static_cast<int>(tokens.size());
  for (int i = 0; i < n; ++i) {
    const auto [lo, hi] = token_frame_span(i, n, n_frames);
    if (lo >= hi) continue;
    const Vector v = token_vector(tokens[static_cast<std::size_t>(i)]);
    for (int t = lo; t < hi; ++t) out.row(t) = v.transpose();
  }
  return out;
}

FileTextProvider::FileTextProvider(std::filesystem::path path)
    : path_(std::move(path)), table_(read_matrix_csv(path_)) {}

Matrix FileTextProvider::embed(const std::vector<std::string>&, int n_frames) const {
  if (table_.rows() != n_frames)
    throw Error(path_.string() + ": embedding rows (" + std::to_string(table_.rows()) +
                ") do not match frame count (" + std::to_string(n_frames) + ")");
  return table_;
}

std::unique_ptr<TextEmbeddingProvider> make_text_provider(const std::string& spec, int d_text) {
  std::unique_ptr<TextEmbeddingProvider> provider;
  if (spec == "stub") {
    provider = std::make_unique<StubTextProvider>(d_text);
  } else if (spec.starts_with("file:")) {
    provider = std::make_unique<FileTextProvider>(spec.substr(5));
  } else {
    throw Error("unknown text provider '" + spec + "' (expected stub or file:<path>)");
  }
  if (provider->dim() != d_text)
    throw Error("text provider '" + spec + "' has dimension " + std::to_string(provider->dim()) +
                ", model expects " + std::to_string(d_text));
  return provider;
}

TextEmbeddingStream embed_text(const std::vector<std::string>& tokens,
                               const TextEmbeddingProvider& provider, int n_frames) {
  return {provider.embed(tokens, n_frames), provider.id()};
}

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  return tokens;
}

std::vector<std::string> read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open transcript: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return tokenize(buffer.str());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size() || cell.empty())
        throw Error(path.string() + ": line " + std::to_string(line_no) + ": non-numeric cell '" +
                    cell + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(path.string() + ": line " + std::to_string(line_no) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  if (!m.allFinite()) throw Error(path.string() + ": non-finite value");
  return m;
}

}  // namespace lhg
