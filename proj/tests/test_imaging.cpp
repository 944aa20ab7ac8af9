#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "caplab/error.hpp"
#include "caplab/format.hpp"
#include "caplab/image.hpp"
#include "caplab/image_io.hpp"
#include "caplab/kv_config.hpp"
#include "caplab/metrics.hpp"
#include "caplab/plot.hpp"
#include "support.hpp"

using namespace caplab;

namespace {

double oracle_gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

double oracle_mse(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

Image uniform(int h, int w, double r, double g, double b) {
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  return img;
}

}  // namespace

TEST_CASE("grayscale uses BT.601 weights") {
  const GrayImage mid = to_grayscale(uniform(3, 4, 0.5, 0.5, 0.5));
  for (double v : mid.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  const GrayImage red = to_grayscale(uniform(2, 2, 1.0, 0.0, 0.0));
  for (double v : red.data()) CHECK(v == doctest::Approx(0.299).epsilon(1e-15));

  const Image img = testing::random_image(4, 4, 3, 11);
  const GrayImage g = to_grayscale(img);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      CHECK(std::abs(g.at(y, x) - oracle_gray(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2))) < 1e-15);
}

TEST_CASE("grayscale passes single-channel input through and rejects others") {
  const Image one = testing::random_image(2, 3, 1, 4);
  const GrayImage g = to_grayscale(one);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data()[i] == one.data()[i]);
  CHECK_THROWS_AS(to_grayscale(Image(2, 2, 2)), Error);
}

TEST_CASE("brightness map normalizes by the maximum") {
  const GrayImage flat = brightness_map(uniform(3, 3, 0.25, 0.25, 0.25));
  for (double v : flat.data()) CHECK(v == 1.0);

  Image two(1, 2, 3);
  for (int c = 0; c < 3; ++c) {
    two.at(0, 0, c) = 0.1;
    two.at(0, 1, c) = 0.5;
  }
  const GrayImage b = brightness_map(two);
  CHECK(b.at(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(b.at(0, 1) == 1.0);

  const GrayImage black = brightness_map(Image(5, 7, 3, 0.0));
  for (double v : black.data()) CHECK(v == 1.0);
}

TEST_CASE("brightness map lies in [0,1] with max exactly 1") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GrayImage b = brightness_map(testing::random_image(9, 6, 3, seed, 0.0, 0.3));
    double mx = 0.0;
    for (double v : b.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      mx = std::max(mx, v);
    }
    CHECK(mx == 1.0);
  }
}

TEST_CASE("threshold mask") {
  GrayImage b(1, 2);
  b.at(0, 0) = 0.0005;
  b.at(0, 1) = 0.002;
  const BinaryMask m = threshold_mask(b, 1e-3);
  CHECK(m.at(0, 0) == 0);
  CHECK(m.at(0, 1) == 1);

  const GrayImage r = testing::random_gray(8, 5, 3);
  const BinaryMask all = threshold_mask(r, 0.0);
  for (auto v : all.data()) CHECK(v == 1);
  GrayImage zeros(2, 2, 0.0);
  const BinaryMask zero_mask = threshold_mask(zeros, 0.0);
  for (auto v : zero_mask.data()) CHECK(v == 1);

  const BinaryMask half = threshold_mask(r, 0.5);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 5; ++x) CHECK(half.at(y, x) == (r.at(y, x) < 0.5 ? 0 : 1));
}

TEST_CASE("threshold mask is idempotent on its own output") {
  const GrayImage r = testing::random_gray(6, 6, 4);
  const BinaryMask m = threshold_mask(r, 0.3);
  GrayImage as_gray(6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) as_gray.at(y, x) = m.at(y, x);
  CHECK(threshold_mask(as_gray, 0.3) == m);
  // monotone rescale that keeps the partition
  GrayImage scaled = as_gray;
  for (double& v : scaled.data()) v = 0.2 + 0.7 * v;
  CHECK(threshold_mask(scaled, 0.3) == m);
}

TEST_CASE("psnr") {
  const Image a = testing::random_image(8, 8, 3, 1);
  CHECK(psnr(a, a) == kPsnrCapDb);

  const Image zero(4, 4, 3, 0.0);
  const Image half(4, 4, 3, 0.5);
  CHECK(psnr(zero, half) == doctest::Approx(6.0206).epsilon(1e-5));
  CHECK(std::abs(psnr(zero, half) - 10.0 * std::log10(4.0)) < 1e-12);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image x = testing::random_image(7, 9, 3, 100 + s);
    const Image y = testing::random_image(7, 9, 3, 200 + s);
    CHECK(std::abs(psnr(x, y) - 10.0 * std::log10(1.0 / oracle_mse(x, y))) < 1e-9);
  }
  CHECK_THROWS_AS(psnr(Image(2, 2, 3), Image(2, 3, 3)), Error);
}

TEST_CASE("psnr decreases strictly with noise amplitude") {
  const Image base = testing::random_image(16, 16, 3, 5, 0.2, 0.8);
  const Image noise = testing::random_image(16, 16, 3, 6, -1.0, 1.0);
  double prev = kPsnrCapDb + 1.0;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Image b = base;
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] += amp * noise.data()[i];
    const double p = psnr(base, b);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Image a = testing::random_image(12, 12, 3, s);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }

  const double c1 = 0.01 * 0.01;
  const double mu_a = 0.2;
  const double mu_b = 0.8;
  const double closed = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
  const double got = ssim(Image(16, 16, 3, 0.2), Image(16, 16, 3, 0.8));
  CHECK(got < 1.0);
  CHECK(std::abs(got - closed) < 1e-12);

  const Image a = testing::random_image(32, 32, 3, 9);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1e-4);
  Image b = a;
  for (double& v : b.data()) v += n(rng);
  CHECK(ssim(a, b) > 0.99);

  CHECK_THROWS_AS(ssim(Image(8, 8, 3), Image(8, 8, 3)), Error);
}

TEST_CASE("charbonnier") {
  const Image a = testing::random_image(10, 10, 3, 1);
  CHECK(charbonnier(a, a, 1e-3) == 1e-3);

  const Image t(4, 4, 3, 0.2);
  const Image p(4, 4, 3, 0.5);
  CHECK(std::abs(charbonnier(p, t, 0.0) - 0.3) < 1e-12);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image x = testing::random_image(6, 5, 3, 10 + s);
    const Image y = testing::random_image(6, 5, 3, 20 + s);
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x.data()[i] - y.data()[i];
      sum += std::sqrt(d * d + 1e-6);
    }
    CHECK(std::abs(charbonnier(x, y, 1e-3) - sum / static_cast<double>(x.size())) < 1e-9);
  }
}

TEST_CASE("charbonnier properties") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Image x = testing::random_image(5, 4, 3, 300 + s);
    const Image y = testing::random_image(5, 4, 3, 400 + s);
    double mae = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mae += std::abs(x.data()[i] - y.data()[i]);
    mae /= static_cast<double>(x.size());
    CHECK(std::abs(charbonnier(x, y, 0.0) - mae) < 1e-12);
    CHECK(charbonnier(x, y) > kCharbonnierEps);
    CHECK(charbonnier(x, y) == charbonnier(y, x));
  }
}

TEST_CASE("charbonnier gradient matches finite differences") {
  const Image x = testing::random_image(3, 3, 3, 7);
  const Image y = testing::random_image(3, 3, 3, 8);
  const Image g = charbonnier_grad(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    Image xp = x, xm = x;
    xp.data()[i] += 1e-6;
    xm.data()[i] -= 1e-6;
    const double num = (charbonnier(xp, y) - charbonnier(xm, y)) / 2e-6;
    CHECK(std::abs(num - g.data()[i]) < 1e-7);
  }
}

TEST_CASE("evaluate_metrics clamps the prediction") {
  Image t(12, 12, 3, 1.0);
  Image p(12, 12, 3, 1.5);
  const MetricRecord m = evaluate_metrics(p, t);
  CHECK(m.psnr == kPsnrCapDb);
  CHECK(m.ssim == doctest::Approx(1.0));
  CHECK(m.charbonnier == kCharbonnierEps);
}

TEST_CASE("padding, crop and flips") {
  const Image img = testing::random_image(3, 5, 3, 2);
  const Image padded = pad_edge(img, 2, 3);
  CHECK(padded.height() == 5);
  CHECK(padded.width() == 8);
  CHECK(padded.at(4, 7, 1) == img.at(2, 4, 1));
  CHECK(padded.at(0, 6, 2) == img.at(0, 4, 2));
  CHECK(crop(padded, 0, 0, 3, 5) == img);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK(flip_vertical(img).at(0, 1, 0) == img.at(2, 1, 0));
  CHECK(flip_horizontal(img).at(1, 0, 2) == img.at(1, 4, 2));
  CHECK_THROWS_AS(crop(img, 1, 1, 3, 3), Error);
}

TEST_CASE("png round trip is exact on 8-bit values") {
  const auto dir = testing::scratch_dir("png");
  Image img = quantize_image_8bit(testing::random_image(7, 9, 3, 12));
  write_png(dir / "a.png", img);
  const Image back = read_png(dir / "a.png");
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.data()[i] == img.data()[i]);

  CHECK(quantize_8bit(127.5 / 255.0) == 128);
  CHECK(quantize_8bit(-0.2) == 0);
  CHECK(quantize_8bit(1.7) == 255);
  CHECK_THROWS_AS(read_png(dir / "missing.png"), Error);
}

TEST_CASE("format_real round-trips") {
  for (double v : {0.1, 1e-9, -1e9, 23.4993, 1.0 / 3.0}) CHECK(std::stod(format_real(v)) == v);
  CHECK(format_real(0.5) == "0.5");
}

TEST_CASE("heatmap and line plot") {
  GrayImage g(1, 2);
  g.at(0, 0) = 0.0;
  g.at(0, 1) = 2.0;
  const Image h = heatmap(g, 2.0);
  CHECK(h.at(0, 0, 0) == 0.0);
  CHECK(h.at(0, 1, 0) == 1.0);
  CHECK(h.at(0, 1, 2) == 1.0);
  const Image plot = line_plot({{{0, 1, 2}, {3, 1, 2}, {1, 0, 0}}}, 50, 80);
  CHECK(plot.height() == 50);
  CHECK(plot.width() == 80);
}

TEST_CASE("key = value config") {
  const auto cfg = KeyValueConfig::parse("# comment\nqf = 80\n\nlr=0.001  # trailing\nuse_bgsa = false\n",
                                         {"qf", "lr", "use_bgsa"});
  CHECK(cfg.get_int("qf", 0) == 80);
  CHECK(cfg.get_double("lr", 0) == 0.001);
  CHECK_FALSE(cfg.get_bool("use_bgsa", true));
  CHECK(cfg.get_int("missing", 7) == 7);
  CHECK_THROWS_AS(KeyValueConfig::parse("bogus = 1\n", {"qf"}), Error);
  CHECK_THROWS_AS(KeyValueConfig::parse("just text\n", {"qf"}), Error);
}
