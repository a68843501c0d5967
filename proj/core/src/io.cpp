#include "gsmt/io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gsmt/error.hpp"

namespace gsmt {

namespace fs = std::filesystem;

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string(), 0);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw LoadError(std::string("truncated ") + what + ": need " + std::to_string(n) + " more bytes, " +
                          std::to_string(remaining()) + " available",
                      bytes_.size());
    }
  }

  void magic(const char* expected) {
    need(4, "header");
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) {
      throw LoadError(std::string("bad magic, expected ") + expected, pos_);
    }
    pos_ += 4;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  double f32() { return static_cast<double>(std::bit_cast<float>(u32("payload"))); }
  double f64() { return std::bit_cast<double>(u64("payload")); }

  void seek(std::size_t at) { pos_ = at; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

class Writer {
 public:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw DimensionError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

// Exact payload length check before touching the payload.
void expect_payload(const Reader& r, std::uint64_t values, std::size_t width, std::size_t total) {
  const std::uint64_t expected = r.offset() + values * width;
  if (expected != total) {
    throw LoadError("payload size mismatch: header implies " + std::to_string(expected) + " bytes, file has " +
                        std::to_string(total),
                    total < expected ? total : expected);
  }
}

}  // namespace

FeatureVolume parse_features(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic("GFV1");
  const std::uint64_t t = r.u32("header"), n = r.u32("header"), d = r.u32("header");
  if (t == 0 || n == 0 || d == 0) throw LoadError("feature dimensions must be positive", 4);
  expect_payload(r, t * n * d, 4, bytes.size());
  FeatureVolume out{t, n, Tensor({t * n, d})};
  for (double& v : out.data.data()) v = r.f32();
  return out;
}

Bytes encode_features(const Tensor& data, std::size_t frames, std::size_t patches) {
  if (data.rank() != 2 || data.rows() != frames * patches) {
    throw DimensionError("features " + shape_string(data.shape()) + " do not hold " + std::to_string(frames) +
                         " x " + std::to_string(patches) + " rows");
  }
  Writer w;
  w.raw("GFV1", 4);
  w.u32(checked_u32(frames, "T"));
  w.u32(checked_u32(patches, "N"));
  w.u32(checked_u32(data.cols(), "d"));
  for (double v : data.data()) w.f32(v);
  return w.take();
}

FeatureVolume load_features(const fs::path& path) { return parse_features(read_file(path)); }

void save_features(const fs::path& path, const Tensor& data, std::size_t frames, std::size_t patches) {
  write_file(path, encode_features(data, frames, patches));
}

Tensor parse_matrix(std::span<const std::uint8_t> bytes, const char (&magic)[5]) {
  Reader r(bytes);
  r.magic(magic);
  const std::uint64_t rows = r.u32("header"), cols = r.u32("header");
  if (rows == 0 || cols == 0) throw LoadError("matrix dimensions must be positive", 4);
  expect_payload(r, rows * cols, 4, bytes.size());
  Tensor out({rows, cols});
  for (double& v : out.data()) v = r.f32();
  return out;
}

Bytes encode_matrix(const Tensor& m, const char (&magic)[5]) {
  if (m.rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(m.shape()));
  Writer w;
  w.raw(magic, 4);
  w.u32(checked_u32(m.rows(), "rows"));
  w.u32(checked_u32(m.cols(), "cols"));
  for (double v : m.data()) w.f32(v);
  return w.take();
}

Tensor load_question(const fs::path& path) { return parse_matrix(read_file(path), "GQV1"); }
void save_question(const fs::path& path, const Tensor& words) { write_file(path, encode_matrix(words, "GQV1")); }
Tensor load_answers(const fs::path& path) { return parse_matrix(read_file(path), "GAV1"); }
void save_answers(const fs::path& path, const Tensor& answers) { write_file(path, encode_matrix(answers, "GAV1")); }

std::vector<std::size_t> parse_labels(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t value = 0;
    auto [end, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc() || end != line.data() + line.size()) {
      throw LoadError("label line " + std::to_string(out.size() + 1) + " is not a non-negative integer: '" + line +
                          "'",
                      line_start);
    }
    out.push_back(value);
  }
  return out;
}

std::vector<std::size_t> load_labels(const fs::path& path) {
  const Bytes b = read_file(path);
  return parse_labels(std::string(b.begin(), b.end()));
}

void save_labels(const fs::path& path, const std::vector<std::size_t>& labels) {
  std::string text;
  for (std::size_t l : labels) text += std::to_string(l) + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : sections) {
    if (n == name) return &t;
  }
  return nullptr;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic("GCK1");
  const std::uint32_t count = r.u32("header");
  Checkpoint out;
  out.step = r.u64("header");

  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset, values;
    std::size_t at;
  };
  std::vector<Entry> entries;
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.at = r.offset();
    const std::uint32_t len = r.u32("section table");
    e.name = r.text(len, "section name");
    const std::uint32_t rank = r.u32("section table");
    if (rank == 0 || rank > 8) throw LoadError("section '" + e.name + "' has invalid rank", e.at);
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.u32("section table"));
    e.offset = r.u64("section table");
    e.values = r.u64("section table");
    if (e.values != shape_product(e.shape) || e.values == 0) {
      throw LoadError("section '" + e.name + "' count does not match its shape", e.at);
    }
    total = std::max(total, e.offset + e.values);
    entries.push_back(std::move(e));
  }
  const std::size_t payload = r.offset();
  expect_payload(r, total, 8, bytes.size());
  for (const Entry& e : entries) {
    r.seek(payload + e.offset * 8);
    Tensor t(e.shape);
    for (double& v : t.data()) v = r.f64();
    out.sections.emplace_back(e.name, std::move(t));
  }
  return out;
}

Bytes encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.raw("GCK1", 4);
  w.u32(checked_u32(checkpoint.sections.size(), "section count"));
  w.u64(checkpoint.step);
  std::uint64_t offset = 0;
  for (const auto& [name, t] : checkpoint.sections) {
    w.u32(checked_u32(name.size(), "section name"));
    w.raw(name.data(), name.size());
    w.u32(checked_u32(t.rank(), "rank"));
    for (std::size_t dim : t.shape()) w.u32(checked_u32(dim, "dimension"));
    w.u64(offset);
    w.u64(t.size());
    offset += t.size();
  }
  for (const auto& [name, t] : checkpoint.sections) {
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint load_checkpoint(const fs::path& path) { return parse_checkpoint(read_file(path)); }
void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint checkpoint_of(const GsmtModel& model, std::uint64_t step) {
  Checkpoint c;
  c.step = step;
  for (const auto& [name, t] : named_tensors(const_cast<ModelParams&>(model.params()))) {
    c.sections.emplace_back(name, *t);
  }
  c.sections.emplace_back("answer_adapter", model.answer_adapter());
  return c;
}

GsmtModel model_from_checkpoint(const GsmtConfig& config, const Checkpoint& checkpoint) {
  GsmtModel shape_model(config, 0);
  ModelParams params = shape_model.params();
  std::size_t used = 0;
  for (const auto& [name, t] : named_tensors(params)) {
    const Tensor* stored = checkpoint.find(name);
    if (!stored) throw LoadError("checkpoint lacks parameter '" + name + "'", 0);
    if (stored->shape() != t->shape()) {
      throw LoadError("checkpoint parameter '" + name + "' has shape " + shape_string(stored->shape()) +
                          ", model expects " + shape_string(t->shape()),
                      0);
    }
    *t = *stored;
    ++used;
  }
  const Tensor* adapter = checkpoint.find("answer_adapter");
  if (!adapter) throw LoadError("checkpoint lacks 'answer_adapter'", 0);
  if (used + 1 != checkpoint.sections.size()) {
    throw LoadError("checkpoint holds sections the configured model does not use", 0);
  }
  return GsmtModel(config, std::move(params), *adapter);
}

namespace {

std::string sample_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu", i);
  return buf;
}

}  // namespace

std::vector<Sample> load_dataset(const fs::path& dir) {
  const auto labels = load_labels(dir / "labels.txt");
  const Tensor answers = load_answers(dir / "answers.gav");
  std::vector<Sample> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    FeatureVolume f = load_features(dir / (sample_stem(i) + ".gfv"));
    Sample s;
    s.features = std::move(f.data);
    s.frames = f.frames;
    s.patches = f.patches;
    s.question = load_question(dir / (sample_stem(i) + ".gqv"));
    s.answers = {answers, labels[i]};
    if (labels[i] >= answers.rows()) {
      throw LoadError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                          " exceeds the answer count",
                      0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const fs::path& dir, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractError("cannot save an empty dataset");
  fs::create_directories(dir);
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (!(s.answers.candidates == samples.front().answers.candidates)) {
      throw ContractError("dataset samples must share one answer set");
    }
    save_features(dir / (sample_stem(i) + ".gfv"), s.features, s.frames, s.patches);
    save_question(dir / (sample_stem(i) + ".gqv"), s.question);
    labels.push_back(s.answers.groundtruth);
  }
  save_answers(dir / "answers.gav", samples.front().answers.candidates);
  save_labels(dir / "labels.txt", labels);
}

}  // namespace gsmt
