// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//   "LHG1" | u32 version | u32 section count
//   per section: u32 name length | name | u64 offset | u64 size
//   section payloads
// Integers and doubles are little-endian; matrices are column-major.
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "lhg/trainer.hpp"

namespace lhg {
namespace {

constexpr char kMagic[4] = {'L', 'H', 'G', '1'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const std::vector<std::uint8_t>& b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  void vec(const Vector& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, std::string what)
      : data_(data), size_(size), what_(std::move(what)) {}

  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw Error("checkpoint truncated while reading " + what_);
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text() {
    const auto n = u32();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  Vector vec() {
    const auto n = u64();
    if (n > remaining() / 8) throw Error("checkpoint truncated while reading " + what_);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f64();
    return v;
  }
  std::size_t remaining() const { return size_ - pos_; }
  std::size_t position() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> params_section(const ModelParams& params) {
  Writer w;
  std::uint64_t count = 0;
  visit_blocks(params, [&](const std::string&, const auto&) { ++count; });
  w.u64(count);
  visit_blocks(params, [&](const std::string& name, const auto& block) {
    w.text(name);
    w.u64(static_cast<std::uint64_t>(block.rows()));
    w.u64(static_cast<std::uint64_t>(block.cols()));
    for (Eigen::Index i = 0; i < block.size(); ++i) w.f64(block.data()[i]);
  });
  return std::move(w.bytes());
}

void read_params_section(Reader& r, ModelParams& params) {
  auto views = block_views(params);
  const auto count = r.u64();
  if (count != views.size())
    throw Error("checkpoint has " + std::to_string(count) + " parameter blocks, the configured model has " +
                std::to_string(views.size()));
  for (auto& view : views) {
    const std::string name = r.text();
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (name != view.name)
      throw Error("checkpoint block '" + name + "' where '" + view.name + "' was expected");
    if (rows != static_cast<std::uint64_t>(view.rows) || cols != static_cast<std::uint64_t>(view.cols))
      throw Error("checkpoint block " + name + " is " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", expected " + std::to_string(view.rows) + "x" +
                  std::to_string(view.cols));
    for (Eigen::Index i = 0; i < view.size(); ++i) view.data[i] = r.f64();
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state) {
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> sections;
  {
    const std::string cfg = format_config(state.config);
    sections.emplace_back("config", std::vector<std::uint8_t>(cfg.begin(), cfg.end()));
  }
  sections.emplace_back("params", params_section(state.params));
  sections.emplace_back("adam_m", params_section(state.adam_m));
  sections.emplace_back("adam_v", params_section(state.adam_v));
  {
    Writer w;
    w.vec(state.stats.feature_mean);
    w.vec(state.stats.feature_inv_std);
    w.vec(state.stats.listener_mean);
    sections.emplace_back("stats", std::move(w.bytes()));
  }
  {
    Writer w;
    w.u64(static_cast<std::uint64_t>(state.epoch));
    w.u64(state.step);
    w.u64(state.rng.state());
    w.u8(state.rng.has_spare() ? 1 : 0);
    w.f64(state.rng.spare());
    sections.emplace_back("state", std::move(w.bytes()));
  }
  {
    Writer w;
    w.u64(state.log.size());
    for (const auto& e : state.log) {
      w.u64(static_cast<std::uint64_t>(e.epoch));
      w.f64(e.train_reg);
      w.f64(e.train_con);
      w.f64(e.val_reg);
      w.f64(e.val_con);
    }
    sections.emplace_back("log", std::move(w.bytes()));
  }

  std::size_t header = 4 + 4 + 4;
  for (const auto& [name, payload] : sections) header += 4 + name.size() + 8 + 8;
  Writer out;
  out.raw(std::vector<std::uint8_t>(std::begin(kMagic), std::end(kMagic)));
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(sections.size()));
  std::uint64_t offset = header;
  for (const auto& [name, payload] : sections) {
    out.text(name);
    out.u64(offset);
    out.u64(payload.size());
    offset += payload.size();
  }
  for (const auto& [name, payload] : sections) out.raw(payload);
  return std::move(out.bytes());
}

TrainState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader head(bytes.data(), bytes.size(), "header");
  if (bytes.size() < 4 || std::memcmp(head.take(4), kMagic, 4) != 0)
    throw Error("not a checkpoint file (bad magic bytes)");
  const auto version = head.u32();
  if (version != kCheckpointVersion)
    throw Error("checkpoint format version " + std::to_string(version) +
                " is not supported (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  const auto count = head.u32();
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = head.text();
    const auto offset = head.u64();
    const auto size = head.u64();
    if (offset > bytes.size() || size > bytes.size() - offset)
      throw Error("checkpoint truncated: section " + name + " extends past the end of the file");
    table[name] = {offset, size};
  }
  auto section = [&](const std::string& name) {
    const auto it = table.find(name);
    if (it == table.end()) throw Error("checkpoint is missing the '" + name + "' section");
    return Reader(bytes.data() + it->second.first, it->second.second, name);
  };
  auto finish = [](const Reader& r, const std::string& name) {
    if (r.remaining() != 0) throw Error("checkpoint section " + name + " has trailing bytes");
  };

  TrainState s;
  {
    Reader r = section("config");
    const auto* p = r.take(r.remaining());
    s.config = parse_config(std::string(reinterpret_cast<const char*>(p), table["config"].second));
  }
  s.params = make_model(s.config.model);
  s.adam_m = s.params;
  s.adam_v = s.params;
  for (auto [name, target] : {std::pair<const char*, ModelParams*>{"params", &s.params},
                              {"adam_m", &s.adam_m},
                              {"adam_v", &s.adam_v}}) {
    Reader r = section(name);
    read_params_section(r, *target);
    finish(r, name);
  }
  {
    Reader r = section("stats");
    s.stats.feature_mean = r.vec();
    s.stats.feature_inv_std = r.vec();
    s.stats.listener_mean = r.vec();
    finish(r, "stats");
    if (s.stats.feature_mean.size() != s.config.model.n_input() ||
        s.stats.feature_inv_std.size() != s.config.model.n_input() ||
        s.stats.listener_mean.size() != kMotionDim)
      throw Error("checkpoint statistics do not match the configured model");
  }
  {
    Reader r = section("state");
    s.epoch = static_cast<int>(r.u64());
    s.step = r.u64();
    const auto rng_state = r.u64();
    const bool has_spare = r.u8() != 0;
    const double spare = r.f64();
    s.rng.restore(rng_state, has_spare, spare);
    finish(r, "state");
  }
  {
    Reader r = section("log");
    const auto n = r.u64();
    if (n > r.remaining() / 40) throw Error("checkpoint truncated while reading log");
    for (std::uint64_t i = 0; i < n; ++i) {
      EpochLog e;
      e.epoch = static_cast<int>(r.u64());
      e.train_reg = r.f64();
      e.train_con = r.f64();
      e.val_reg = r.f64();
      e.val_con = r.f64();
      s.log.push_back(e);
    }
    finish(r, "log");
  }
  return s;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed while writing checkpoint: " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace lhg
