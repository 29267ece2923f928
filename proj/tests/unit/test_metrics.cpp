#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pat/metrics.hpp"
#include "pat/rng.hpp"
#include "pat/tensor.hpp"

using namespace pat;

namespace {

// Smooth test image in [0,1]: blurred uniform noise keeps some structure
// without the near-flat windows that make SSIM numerically touchy.
Tensor smooth_image(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed, 0, "metrics/smooth");
  Tensor t = oracles::random_tensor({h, w}, rng, 0.0, 1.0);
  t = box_filter(t, 5);
  return box_filter(t, 3);
}

}  // namespace

TEST_CASE("psnr hand values and invariances") {
  Rng rng(41, 0, "metrics/psnr");
  Tensor a = oracles::random_tensor({8, 9}, rng, 0.0, 1.0);

  double same = psnr(a, a);
  CHECK(std::isinf(same));
  CHECK(same > 0.0);

  // uniform offset of 0.1 gives MSE 0.01, so 10 log10(1/0.01) = 20 dB
  Tensor b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));

  // scaling both images and the peak together changes nothing
  double base = psnr(a, b, 1.0);
  CHECK(psnr(scale(a, 3.0), scale(b, 3.0), 3.0) == doctest::Approx(base).epsilon(1e-12));

  Tensor wrong({8, 8});
  CHECK_THROWS_AS(psnr(a, wrong), DimensionError);
  CHECK_THROWS_AS(psnr(a, b, 0.0), ConfigError);
  CHECK_THROWS_AS(psnr(a, b, -1.0), ConfigError);
}

TEST_CASE("ssim identity, symmetry, and degradation") {
  Tensor a = smooth_image(16, 16, 7);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(7, 1, "metrics/noise");
  Tensor b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] += rng.normal(0.0, 0.05);

  double ab = ssim(a, b);
  double ba = ssim(b, a);
  CHECK(ab == ba);
  CHECK(ab < 1.0);
  CHECK(ab <= 1.0 + 1e-12);
}

TEST_CASE("ssim matches the explicit windowed oracle") {
  Rng rng(19, 0, "metrics/oracle");
  Tensor a = oracles::random_tensor({32, 32}, rng, 0.0, 1.0);
  Tensor b = oracles::random_tensor({32, 32}, rng, 0.0, 1.0);

  MsSsimConfig cfg;
  double got = ssim(a, b, cfg);
  double want = oracles::direct_ssim_2d(a, b, cfg.window_width, cfg.window_sigma, cfg.k1,
                                        cfg.k2, cfg.dynamic_range);
  CHECK(std::abs(got - want) <= 1e-10);

  cfg.window_width = 7;
  cfg.window_sigma = 1.2;
  cfg.dynamic_range = 2.0;
  got = ssim(a, b, cfg);
  want = oracles::direct_ssim_2d(a, b, 7, 1.2, cfg.k1, cfg.k2, 2.0);
  CHECK(std::abs(got - want) <= 1e-10);
}

TEST_CASE("ssim input validation") {
  Tensor small({8, 8});
  CHECK_THROWS_AS(ssim(small, small), DimensionError);

  Tensor a = smooth_image(16, 16, 3);
  MsSsimConfig even;
  even.window_width = 10;
  CHECK_THROWS_AS(ssim(a, a, even), ConfigError);

  Tensor flat({256});
  CHECK_THROWS_AS(ssim(flat, flat), DimensionError);
  Tensor four({2, 2, 12, 12});
  CHECK_THROWS_AS(ssim(four, four), DimensionError);

  Tensor other({16, 17});
  CHECK_THROWS_AS(ssim(a, other), DimensionError);
}

TEST_CASE("ssim works on bare 3D volumes") {
  Rng rng(23, 0, "metrics/vol");
  Tensor a = oracles::random_tensor({12, 12, 12}, rng, 0.0, 1.0);
  Tensor b = oracles::random_tensor({12, 12, 12}, rng, 0.0, 1.0);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == ssim(b, a));
  CHECK(ssim(a, b) <= 1.0 + 1e-12);
}

TEST_CASE("ms_ssim identity, symmetry, and bounds") {
  Tensor a = smooth_image(64, 64, 11);
  CHECK(ms_ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  Rng rng(11, 1, "metrics/noise");
  Tensor b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] += rng.normal(0.0, 0.05);
  double ab = ms_ssim(a, b);
  CHECK(ab == ms_ssim(b, a));
  CHECK(ab < 1.0);
  CHECK(ab >= 0.0);
}

TEST_CASE("ms_ssim with one scale reduces to ssim") {
  Tensor a = smooth_image(32, 32, 5);
  Rng rng(5, 1, "metrics/noise");
  Tensor b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] += rng.normal(0.0, 0.02);

  MsSsimConfig cfg;
  cfg.scales = 1;
  cfg.scale_weights = {1.0};
  double s = ssim(a, b, cfg);
  REQUIRE(s > 0.0);
  CHECK(ms_ssim(a, b, cfg) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("ms_ssim reduces scales to fit small images") {
  // 64x64 with an 11-wide window supports 3 dyadic scales (64, 32, 16)
  Tensor a = smooth_image(64, 64, 13);
  Rng rng(13, 1, "metrics/noise");
  Tensor b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] += rng.normal(0.0, 0.03);

  double full = ms_ssim(a, b);  // requests 5 scales, silently runs 3

  MsSsimConfig three;
  three.scales = 3;
  three.scale_weights = {0.0448, 0.2856, 0.3001};
  CHECK(full == doctest::Approx(ms_ssim(a, b, three)).epsilon(1e-12));
}

TEST_CASE("ms_ssim configuration validation") {
  Tensor a = smooth_image(64, 64, 17);

  MsSsimConfig cfg;
  cfg.scales = 2;  // default weights still have 5 entries
  CHECK_THROWS_AS(ms_ssim(a, a, cfg), ConfigError);

  cfg.scales = 1;
  cfg.scale_weights = {0.0};
  CHECK_THROWS_AS(ms_ssim(a, a, cfg), ConfigError);

  cfg.scales = 0;
  cfg.scale_weights = {};
  CHECK_THROWS_AS(ms_ssim(a, a, cfg), ConfigError);

  Tensor tiny({8, 8});
  CHECK_THROWS_AS(ms_ssim(tiny, tiny), DimensionError);

  Tensor other({64, 63});
  CHECK_THROWS_AS(ms_ssim(a, other), DimensionError);
}

TEST_CASE("ms_ssim decreases with noise level") {
  Tensor base = smooth_image(64, 64, 29);
  Rng rng(29, 2, "metrics/noise");

  std::vector<double> sigmas = {0.01, 0.05, 0.1};
  std::vector<double> means;
  for (double sigma : sigmas) {
    double acc = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      Tensor noisy = base;
      for (int64_t i = 0; i < noisy.numel(); ++i) noisy[i] += rng.normal(0.0, sigma);
      acc += ms_ssim(base, noisy);
    }
    means.push_back(acc / 50.0);
  }
  CHECK(means[0] > means[1]);
  CHECK(means[1] > means[2]);
  CHECK(means[0] < 1.0);
}

TEST_CASE("otsu threshold on a two level image") {
  // 90% background at 0.1, 10% foreground at 0.9
  Tensor img({1000});
  for (int64_t i = 0; i < 1000; ++i) img[i] = i < 900 ? 0.1 : 0.9;

  // with 8 bins all mass sits in bins 0 and 7; every split separates the
  // same classes, ties resolve to the lowest split, threshold lands one bin
  // above the background
  CHECK(otsu_threshold(img, 8) == doctest::Approx(0.1 + 0.8 / 8.0).epsilon(1e-12));

  double t = otsu_threshold(img, 256);
  CHECK(t > 0.1);
  CHECK(t < 0.9);
  CHECK(foreground_fraction(img, t) == doctest::Approx(0.1));
}

TEST_CASE("otsu threshold matches a brute force search") {
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    Rng rng(seed, 0, "metrics/otsu");
    Tensor img = oracles::random_tensor({500}, rng, 0.0, 1.0);
    // sprinkle in a brighter cluster so the classes are real
    for (int64_t i = 0; i < 60; ++i) img[i] = rng.uniform(0.8, 1.0);

    for (int64_t bins : {16, 64}) {
      double lo = img.min_value(), hi = img.max_value();
      std::vector<int64_t> hist(static_cast<size_t>(bins), 0);
      for (int64_t i = 0; i < img.numel(); ++i) {
        int64_t b = static_cast<int64_t>((img[i] - lo) / (hi - lo) * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        ++hist[static_cast<size_t>(b)];
      }
      double total = static_cast<double>(img.numel());
      double best = -1.0;
      int64_t best_k = -1;
      for (int64_t k = 0; k + 1 < bins; ++k) {
        double w0 = 0.0, m0 = 0.0, w1 = 0.0, m1 = 0.0;
        for (int64_t j = 0; j < bins; ++j) {
          double h = static_cast<double>(hist[static_cast<size_t>(j)]);
          double center = static_cast<double>(j) + 0.5;
          if (j <= k) {
            w0 += h;
            m0 += h * center;
          } else {
            w1 += h;
            m1 += h * center;
          }
        }
        if (w0 == 0.0 || w1 == 0.0) continue;
        m0 /= w0;
        m1 /= w1;
        double var = w0 / total * w1 / total * (m0 - m1) * (m0 - m1);
        if (var > best * (1.0 + 1e-12)) {
          best = var;
          best_k = k;
        }
      }
      REQUIRE(best_k >= 0);
      double want = lo + (static_cast<double>(best_k) + 1.0) / static_cast<double>(bins) * (hi - lo);
      CHECK(otsu_threshold(img, bins) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("otsu threshold is affine invariant") {
  Rng rng(31, 0, "metrics/otsu");
  Tensor img = oracles::random_tensor({400}, rng, 0.0, 1.0);
  for (int64_t i = 0; i < 50; ++i) img[i] = rng.uniform(0.85, 1.0);

  double t = otsu_threshold(img, 128);
  Tensor mapped = img;
  for (int64_t i = 0; i < mapped.numel(); ++i) mapped[i] = 2.5 * mapped[i] - 0.7;
  CHECK(otsu_threshold(mapped, 128) == doctest::Approx(2.5 * t - 0.7).epsilon(1e-9));
}

TEST_CASE("otsu threshold rejects degenerate inputs") {
  Tensor flat({100});
  flat.fill(0.42);
  CHECK_THROWS_AS(otsu_threshold(flat), ConfigError);

  Tensor ok({100});
  for (int64_t i = 0; i < 100; ++i) ok[i] = static_cast<double>(i) / 99.0;
  CHECK_THROWS_AS(otsu_threshold(ok, 1), ConfigError);
}

TEST_CASE("foreground fraction counts strictly above") {
  Tensor img({4});
  img[0] = 0.1;
  img[1] = 0.5;
  img[2] = 0.9;
  img[3] = 0.5;
  CHECK(foreground_fraction(img, 0.5) == doctest::Approx(0.25));
  CHECK(foreground_fraction(img, 0.05) == doctest::Approx(1.0));
  CHECK(foreground_fraction(img, 0.9) == doctest::Approx(0.0));
}

TEST_CASE("mip projects a single voxel onto every axis") {
  Tensor vol({4, 5, 6});
  vol.at(1, 2, 3) = 0.7;

  Tensor m0 = mip(vol, 0);
  REQUIRE(m0.shape() == std::vector<int64_t>{5, 6});
  CHECK(m0.at(2, 3) == doctest::Approx(0.7));
  CHECK(m0.sum() == doctest::Approx(0.7));

  Tensor m1 = mip(vol, 1);
  REQUIRE(m1.shape() == std::vector<int64_t>{4, 6});
  CHECK(m1.at(1, 3) == doctest::Approx(0.7));

  Tensor m2 = mip(vol, 2);
  REQUIRE(m2.shape() == std::vector<int64_t>{4, 5});
  CHECK(m2.at(1, 2) == doctest::Approx(0.7));
}

TEST_CASE("mip matches per column maxima") {
  Rng rng(37, 0, "metrics/mip");
  Tensor vol = oracles::random_tensor({3, 4, 5}, rng);  // negatives included

  Tensor m0 = mip(vol, 0);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 5; ++j) {
      double want = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < 3; ++k) want = std::max(want, vol.at(k, i, j));
      CHECK(m0.at(i, j) == want);
    }

  Tensor m1 = mip(vol, 1);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 5; ++j) {
      double want = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < 4; ++k) want = std::max(want, vol.at(i, k, j));
      CHECK(m1.at(i, j) == want);
    }

  Tensor m2 = mip(vol, 2);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      double want = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < 5; ++k) want = std::max(want, vol.at(i, j, k));
      CHECK(m2.at(i, j) == want);
    }
}

TEST_CASE("mip on a 2D image collapses one axis") {
  Tensor img({2, 3});
  img.at(0, 0) = 1.0;
  img.at(0, 1) = -2.0;
  img.at(0, 2) = 3.0;
  img.at(1, 0) = 4.0;
  img.at(1, 1) = -5.0;
  img.at(1, 2) = 0.5;

  Tensor rows = mip(img, 1);
  REQUIRE(rows.shape() == std::vector<int64_t>{2});
  CHECK(rows[0] == doctest::Approx(3.0));
  CHECK(rows[1] == doctest::Approx(4.0));

  Tensor cols = mip(img, 0);
  REQUIRE(cols.shape() == std::vector<int64_t>{3});
  CHECK(cols[0] == doctest::Approx(4.0));
  CHECK(cols[1] == doctest::Approx(-2.0));
  CHECK(cols[2] == doctest::Approx(3.0));
}

TEST_CASE("mip rejects bad axes") {
  Tensor vol({3, 4, 5});
  CHECK_THROWS_AS(mip(vol, 3), DimensionError);
  CHECK_THROWS_AS(mip(vol, -1), DimensionError);
  Tensor line({7});
  CHECK_THROWS_AS(mip(line, 0), DimensionError);
}
