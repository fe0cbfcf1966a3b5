#include <gtest/gtest.h>

#include <cstdint>
#include <fstream>
#include <random>

#include "talkinghead/error.hpp"
#include "talkinghead/io/container.hpp"
#include "talkinghead/io/csv.hpp"
#include "talkinghead/io/png.hpp"
#include "talkinghead/io/wav.hpp"
#include "test_util.hpp"

namespace {

using th::test::TempDir;

TEST(Container, RoundTripsArraysAndMeta) {
  TempDir dir("container");
  th::io::Container c;
  c.meta()["kind"] = "demo";
  c.meta()["count"] = 3;
  const std::vector<double> v{0.5, -1.25, 3.0, 1e-3, 7.0, -2.0};
  c.add_f32("values", {2, 3}, v);
  const std::vector<std::int32_t> ids{4, -7, 2147483647};
  c.add_i32("ids", {3}, ids);
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  c.add_matrix("m", m);
  c.write(dir.file("c.bin"));

  const auto r = th::io::Container::read(dir.file("c.bin"));
  EXPECT_EQ(r.meta().at("kind"), "demo");
  EXPECT_EQ(r.meta().at("count"), 3);
  ASSERT_EQ(r.arrays().size(), 3u);
  EXPECT_EQ(r.arrays()[0].name, "values");
  const auto back = r.f32_as_double("values");
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(v[i])));
  EXPECT_EQ(r.array("ids").i32, ids);
  EXPECT_EQ(r.matrix("m"), m);
  EXPECT_TRUE(r.has("m"));
  EXPECT_FALSE(r.has("absent"));
  EXPECT_THROW((void)r.array("absent"), th::IoError);
}

TEST(Container, RejectsBadInput) {
  TempDir dir("container_bad");
  th::io::Container c;
  const std::vector<double> v{1, 2, 3};
  EXPECT_THROW(c.add_f32("x", {2, 2}, v), th::ConfigError);
  c.add_f32("x", {3}, v);
  EXPECT_THROW(c.add_f32("x", {3}, v), th::ConfigError);

  std::ofstream(dir.file("junk.bin")) << "not a container";
  EXPECT_THROW(th::io::Container::read(dir.file("junk.bin")), th::IoError);
  EXPECT_THROW(th::io::Container::read(dir.file("missing.bin")), th::IoError);
}

TEST(Wav, SixteenBitRoundTripIsExactOnTheGrid) {
  TempDir dir("wav");
  std::vector<double> s;
  for (int i = -32768; i < 32768; i += 97) s.push_back(i / 32768.0);
  s.push_back(32767.0 / 32768.0);
  th::io::write_wav(dir.file("a.wav"), s, 16000);
  const auto w = th::io::read_wav(dir.file("a.wav"));
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.samples.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(w.samples[i], s[i]);
}

TEST(Wav, ClampsOutOfRangeSamples) {
  TempDir dir("wav_clamp");
  th::io::write_wav(dir.file("a.wav"), {2.0, -2.0}, 8000);
  const auto w = th::io::read_wav(dir.file("a.wav"));
  EXPECT_EQ(w.samples[0], 32767.0 / 32768.0);
  EXPECT_EQ(w.samples[1], -1.0);
}

// Hand-written stereo file: the reader must average the channels.
TEST(Wav, StereoIsDownmixed) {
  TempDir dir("wav_stereo");
  const std::vector<std::int16_t> frames{1000, 3000, -4000, 0};
  std::ofstream out(dir.file("s.wav"), std::ios::binary);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + 8);
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(2);
  u32(22050);
  u32(22050 * 4);
  u16(4);
  u16(16);
  out.write("data", 4);
  u32(8);
  out.write(reinterpret_cast<const char*>(frames.data()), 8);
  out.close();

  const auto w = th::io::read_wav(dir.file("s.wav"));
  EXPECT_EQ(w.sample_rate, 22050);
  ASSERT_EQ(w.samples.size(), 2u);
  EXPECT_DOUBLE_EQ(w.samples[0], 2000.0 / 32768.0);
  EXPECT_DOUBLE_EQ(w.samples[1], -2000.0 / 32768.0);
}

TEST(Png, EightBitRoundTrip) {
  TempDir dir("png");
  th::Image img(5, 3);
  std::mt19937 rng(3);
  for (auto& v : img.data) v = static_cast<double>(rng() % 256) / 255.0;
  img.at(0, 0, 0) = 1.7;
  img.at(1, 0, 0) = -0.3;
  th::io::write_png(dir.file("a.png"), img);
  const th::Image back = th::io::read_png(dir.file("a.png"));
  ASSERT_TRUE(back.same_size(img));
  EXPECT_EQ(back.at(0, 0, 0), 1.0);
  EXPECT_EQ(back.at(1, 0, 0), 0.0);
  for (std::size_t i = 6; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 1e-12);
  EXPECT_THROW(th::io::read_png(dir.file("none.png")), th::IoError);
}

TEST(Csv, TableRoundTrip) {
  TempDir dir("csv");
  th::io::Table t;
  t.header = {"a", "b"};
  t.rows = {{1.5, -2.0}, {0.1, 1e-9}};
  th::io::write_csv(dir.file("t.csv"), t);
  const auto r = th::io::read_csv(dir.file("t.csv"));
  EXPECT_EQ(r.header, t.header);
  ASSERT_EQ(r.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(r.rows[i][j], t.rows[i][j]);
}

TEST(Image, MeanAbsDiff) {
  th::Image a(2, 2, 0.25), b(2, 2, 0.75);
  EXPECT_DOUBLE_EQ(th::mean_abs_diff(a, b), 0.5);
  EXPECT_THROW(th::mean_abs_diff(a, th::Image(3, 2)), th::ConfigError);
}

}  // namespace
