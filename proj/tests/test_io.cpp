#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "gsmt/error.hpp"
#include "gsmt/io.hpp"
#include "gsmt/verify.hpp"

using namespace gsmt;
namespace fs = std::filesystem;

namespace {

void put_u32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(Bytes& b, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(b, u);
}

Bytes header(const char* magic) { return Bytes(magic, magic + 4); }

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gsmt_io_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(FeatureFile, ParsesHandBuiltBytes) {
  Bytes b = header("GFV1");
  put_u32(b, 2);  // T
  put_u32(b, 1);  // N
  put_u32(b, 3);  // d
  for (float v : {1.f, 2.f, 3.f, -4.f, 0.5f, 6.f}) put_f32(b, v);
  const FeatureVolume f = parse_features(b);
  EXPECT_EQ(f.frames, 2u);
  EXPECT_EQ(f.patches, 1u);
  EXPECT_EQ(f.data, Tensor::matrix({{1, 2, 3}, {-4, 0.5, 6}}));
  EXPECT_EQ(encode_features(f.data, 2, 1), b);
}

TEST(FeatureFile, RejectsMalformedInput) {
  Bytes b = header("GFV1");
  put_u32(b, 2);
  put_u32(b, 2);
  put_u32(b, 2);
  for (int i = 0; i < 7; ++i) put_f32(b, 1.f);
  try {
    parse_features(b);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("payload"), std::string::npos);
  }
  put_f32(b, 1.f);
  EXPECT_NO_THROW(parse_features(b));
  put_f32(b, 1.f);  // trailing bytes
  EXPECT_THROW(parse_features(b), LoadError);

  Bytes wrong = b;
  wrong[3] = '2';
  try {
    parse_features(wrong);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  EXPECT_THROW(parse_features(Bytes(b.begin(), b.begin() + 9)), LoadError);
  Bytes zero = header("GFV1");
  put_u32(zero, 0);
  put_u32(zero, 1);
  put_u32(zero, 1);
  EXPECT_THROW(parse_features(zero), LoadError);
}

TEST(MatrixFiles, MagicSelectsKind) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const Bytes q = encode_matrix(m, "GQV1");
  EXPECT_EQ(parse_matrix(q, "GQV1"), m);
  EXPECT_THROW(parse_matrix(q, "GAV1"), LoadError);
  Bytes hand = header("GAV1");
  put_u32(hand, 1);
  put_u32(hand, 2);
  put_f32(hand, 0.25f);
  put_f32(hand, -1.f);
  EXPECT_EQ(parse_matrix(hand, "GAV1"), Tensor::matrix({{0.25, -1}}));
}

TEST(Labels, ParseAndReject) {
  EXPECT_EQ(parse_labels("3\n0\n12\n"), (std::vector<std::size_t>{3, 0, 12}));
  EXPECT_EQ(parse_labels("1\r\n2"), (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(parse_labels("1\n-2\n"), LoadError);
  EXPECT_THROW(parse_labels("x\n"), LoadError);
}

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint c;
  c.step = 1234567890123ull;
  c.sections.emplace_back("a", Tensor::matrix({{0.1, 1e-300}, {-3.0, 1.0 / 3.0}}));
  c.sections.emplace_back("bb", Tensor({3}, {1, 2, 3}));
  const Checkpoint back = parse_checkpoint(encode_checkpoint(c));
  EXPECT_EQ(back.step, c.step);
  ASSERT_EQ(back.sections.size(), 2u);
  EXPECT_EQ(back.sections[0].first, "a");
  EXPECT_EQ(back.sections[0].second, c.sections[0].second);
  EXPECT_EQ(*back.find("bb"), c.sections[1].second);
  EXPECT_EQ(back.find("zz"), nullptr);
  Bytes b = encode_checkpoint(c);
  b.pop_back();
  EXPECT_THROW(parse_checkpoint(b), LoadError);
}

TEST(Checkpoint, ModelRoundTrip) {
  const GsmtConfig cfg = minimal_config();
  const GsmtModel model(cfg, 12);
  const fs::path dir = scratch("ckpt");
  save_checkpoint(dir / "m.gck", checkpoint_of(model, 9));
  const Checkpoint ck = load_checkpoint(dir / "m.gck");
  EXPECT_EQ(ck.step, 9u);
  const GsmtModel back = model_from_checkpoint(cfg, ck);
  const Sample s = random_sample(cfg, 4, 4, 3, 3, 5);
  EXPECT_EQ(predict(back, s), predict(model, s));
  ModelParams a = model.params(), b = back.params();
  auto x = named_tensors(a), y = named_tensors(b);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(*x[i].second, *y[i].second);

  GsmtConfig other = cfg;
  other.gating = false;
  EXPECT_THROW(model_from_checkpoint(other, ck), LoadError);  // extra w_v sections
  GsmtConfig wider = cfg;
  wider.d_k = 6;
  EXPECT_THROW(model_from_checkpoint(wider, ck), LoadError);
  fs::remove_all(dir);
}

TEST(Dataset, RoundTripThroughDirectory) {
  const GsmtConfig cfg = minimal_config();
  std::vector<Sample> samples;
  Tensor answers;
  for (int i = 0; i < 3; ++i) {
    Sample s = random_sample(cfg, 4, 4, 2, 3, 20 + i);
    if (i == 0) answers = s.answers.candidates;
    s.answers.candidates = answers;
    // binary32 on disk
    for (auto* t : {&s.features, &s.question, &s.answers.candidates})
      for (auto& v : t->data()) v = static_cast<float>(v);
    samples.push_back(s);
  }
  const fs::path dir = scratch("dataset");
  save_dataset(dir, samples);
  EXPECT_TRUE(fs::exists(dir / "labels.txt"));
  EXPECT_TRUE(fs::exists(dir / "answers.gav"));
  EXPECT_TRUE(fs::exists(dir / "sample_00002.gfv"));
  const std::vector<Sample> back = load_dataset(dir);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].features, samples[i].features);
    EXPECT_EQ(back[i].question, samples[i].question);
    EXPECT_EQ(back[i].answers.groundtruth, samples[i].answers.groundtruth);
    EXPECT_EQ(back[i].frames, 4u);
  }
  save_labels(dir / "labels.txt", {0, 1, 7});
  EXPECT_THROW(load_dataset(dir), LoadError);
  fs::remove_all(dir);
}
