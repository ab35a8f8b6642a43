#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <unordered_map>

#include "smoothsr/datagen.hpp"
#include "smoothsr/hash.hpp"

using namespace smoothsr;

namespace {

Image ramp(std::size_t n, double a, double b, bool horizontal) {
  Image im(3, n, n);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) im.at(c, y, x) = a * double(horizontal ? x : y) + b + 0.01 * double(c);
  return im;
}

double mean_of(const Image& im) {
  double s = 0.0;
  for (double v : im.px) s += v;
  return s / double(im.size());
}

Image random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image im(c, h, w);
  for (double& v : im.px) v = u(rng);
  return im;
}

}  // namespace

TEST(Face, DeterministicAndInRange) {
  const auto p = FaceParams::sample(99);
  const Image a = generate_face(p), b = generate_face(FaceParams::sample(99));
  EXPECT_EQ(a.px, b.px);
  EXPECT_EQ(a.channels, 3u);
  EXPECT_EQ(a.height, 64u);
  for (double v : a.px) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Face, AntiAliasedEdgesHaveIntermediateValues) {
  const Image a = generate_face(FaceParams::sample(3));
  std::size_t mixed = 0;
  for (std::size_t y = 0; y < a.height; ++y)
    for (std::size_t x = 1; x + 1 < a.width; ++x) {
      const double l = a.at(0, y, x - 1), m = a.at(0, y, x), r = a.at(0, y, x + 1);
      if (std::abs(l - r) > 0.2 && m > std::min(l, r) + 0.02 && m < std::max(l, r) - 0.02) ++mixed;
    }
  EXPECT_GT(mixed, 10u);
}

TEST(Face, RejectsOutOfCanvasGeometry) {
  auto p = FaceParams::sample(5);
  p.head_cx = 2.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  EXPECT_THROW(generate_face(p), std::invalid_argument);
  p = FaceParams::sample(5);
  p.mouth_y = 63.5;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

// Pairwise L2 > 0 for every pair is the same as all images being distinct;
// bucket by content hash and compare exactly inside buckets.
TEST(Face, ThousandImagesAllDistinct) {
  std::unordered_map<std::uint64_t, std::vector<Image>> buckets;
  std::size_t dupes = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    Image im = generate_face(FaceParams::sample(derive_seed(7, "face/" + std::to_string(i))));
    std::string bytes(reinterpret_cast<const char*>(im.px.data()), im.px.size() * sizeof(double));
    auto& bucket = buckets[fnv1a64(bytes)];
    for (const auto& other : bucket) dupes += other.px == im.px;
    bucket.push_back(std::move(im));
  }
  EXPECT_EQ(dupes, 0u);
}

TEST(Bicubic, KernelValues) {
  EXPECT_EQ(bicubic_kernel(0.0), 1.0);
  EXPECT_EQ(bicubic_kernel(1.0), 0.0);
  EXPECT_EQ(bicubic_kernel(2.0), 0.0);
  EXPECT_DOUBLE_EQ(bicubic_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(bicubic_kernel(1.5), -0.0625);
  // Partition of unity at any offset.
  for (double t : {0.0, 0.1, 0.37, 0.5, 0.93}) {
    double s = 0.0;
    for (int k = -2; k <= 2; ++k) s += bicubic_kernel(t + k);
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
}

TEST(Bicubic, ConstantStaysConstant) {
  Image c(3, 64, 64, 0.37);
  for (std::size_t s : {1u, 2u, 4u}) {
    const Image d = bicubic_downsample(c, s);
    EXPECT_EQ(d.height, 64u / s);
    for (double v : d.px) EXPECT_NEAR(v, 0.37, 1e-14);
  }
  for (double v : bicubic_upsample(Image(3, 16, 16, 0.37), 4).px) EXPECT_NEAR(v, 0.37, 1e-14);
}

TEST(Bicubic, UnitFactorIsIdentity) {
  const Image a = random_image(3, 16, 16, 1);
  EXPECT_EQ(bicubic_downsample(a, 1).px, a.px);
}

// Closed form: output i samples the input at (i + 0.5) s - 0.5, and cubic
// convolution reproduces linear functions wherever the stretched support
// stays off the boundary.
TEST(Bicubic, LinearRampMatchesAnalyticValues) {
  for (bool horizontal : {true, false}) {
    const double a = 0.013, b = 0.1;
    const Image d = bicubic_downsample(ramp(64, a, b, horizontal), 2);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const std::size_t i = horizontal ? x : y;
          if (i < 2 || i > 29) continue;
          const double expected = a * ((double(i) + 0.5) * 2.0 - 0.5) + b + 0.01 * double(c);
          EXPECT_NEAR(d.at(c, y, x), expected, 1e-6);
        }
  }
}

TEST(Bicubic, RejectsIndivisibleExtent) {
  EXPECT_THROW(bicubic_downsample(Image(3, 30, 30), 4), std::invalid_argument);
}

TEST(Degrade, ZeroStrengthIsIdentity) {
  const Image a = random_image(3, 16, 16, 2);
  DegradationParams dp;
  EXPECT_TRUE(dp.is_identity());
  EXPECT_EQ(synthetic_degrade(a, dp).px, a.px);
}

TEST(Degrade, NoiseResidualStd) {
  Image flat(3, 20, 20, 0.5);  // 1200 pixels
  Rng rng(11);
  const Image n = add_gaussian_noise(flat, 0.05, rng);
  double s2 = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) s2 += (n.px[i] - 0.5) * (n.px[i] - 0.5);
  const double sd = std::sqrt(s2 / double(n.size()));
  EXPECT_NEAR(sd, 0.05, 0.005);
}

TEST(Degrade, GaussianBlurPreservesMean) {
  for (double sigma : {0.5, 1.3, 2.5}) {
    DegradationParams dp;
    dp.blur_sigma = sigma;
    const Image a = random_image(3, 16, 16, 3);
    EXPECT_NEAR(mean_of(synthetic_degrade(a, dp)), mean_of(a), 1e-6) << sigma;
  }
}

TEST(Degrade, BlurKernelNormalized) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image k = blur_kernel(DegradationParams::sample(s));
    double total = 0.0;
    for (double v : k.px) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(k.height % 2, 1u);
  }
}

// Each coefficient moves by at most half a step; the DCT is orthonormal, so
// the block's pixel error is bounded by the step table's norm.
TEST(Degrade, QuantizationErrorBoundedByStepTable) {
  const double strength = 0.7;
  const Image a = random_image(1, 16, 16, 4);
  const Image q = block_quantize(a, strength);
  const int table[8][8] = {
      {16, 11, 10, 16, 24, 40, 51, 61},     {12, 12, 14, 19, 26, 58, 60, 55},
      {14, 13, 16, 24, 40, 57, 69, 56},     {14, 17, 22, 29, 51, 87, 80, 62},
      {18, 22, 37, 56, 68, 109, 103, 77},   {24, 35, 55, 64, 81, 104, 113, 92},
      {49, 64, 78, 87, 103, 121, 120, 101}, {72, 92, 95, 98, 112, 100, 103, 99},
  };
  double bound = 0.0;
  for (auto& row : table)
    for (int t : row) bound += std::pow(0.5 * strength * t / 255.0, 2);
  for (std::size_t by = 0; by < 16; by += 8)
    for (std::size_t bx = 0; bx < 16; bx += 8) {
      double err = 0.0;
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) err += std::pow(q.at(0, by + y, bx + x) - a.at(0, by + y, bx + x), 2);
      EXPECT_LE(err, bound + 1e-12);
      EXPECT_GT(err, 0.0);
    }
  // A vanishing step reconstructs the block.
  const Image fine = block_quantize(a, 1e-9);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(fine.px[i], a.px[i], 1e-9);
  // Partial edge blocks are handled too.
  const Image odd = random_image(3, 12, 10, 5);
  EXPECT_EQ(block_quantize(odd, 0.5).px.size(), odd.px.size());
}

TEST(Degrade, OutputClampedAndDeterministic) {
  const Image a = random_image(3, 16, 16, 6);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto dp = DegradationParams::sample(s);
    EXPECT_GE(dp.blur_sigma, 0.5);
    EXPECT_LE(dp.blur_sigma, 2.5);
    EXPECT_LE(dp.noise_sigma, 0.1);
    const Image d = synthetic_degrade(a, dp);
    EXPECT_EQ(d.px, synthetic_degrade(a, dp).px);
    for (double v : d.px) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  DegradationParams bad;
  bad.noise_sigma = -0.1;
  EXPECT_THROW(synthetic_degrade(a, bad), std::invalid_argument);
}

TEST(Mix, FixedAlphaArithmetic) {
  const Image m = mix(Image(3, 4, 4, 1.0), Image(3, 4, 4, 0.0), 0.3);
  for (double v : m.px) EXPECT_EQ(v, 0.3);
}

TEST(Mix, EqualInputsAndConvexity) {
  const Image a = random_image(3, 16, 16, 7), b = random_image(3, 16, 16, 8);
  EXPECT_EQ(mix(a, a, 0.3).px, a.px);
  for (double alpha : {0.01, 0.3, 0.5, 0.99}) {
    const Image m = mix(a, b, alpha);
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_GE(m.px[i], std::min(a.px[i], b.px[i]));
      EXPECT_LE(m.px[i], std::max(a.px[i], b.px[i]));
    }
  }
}

TEST(Mix, RejectsBoundaryAlpha) {
  const Image a(3, 2, 2);
  for (double alpha : {0.0, 1.0, -0.1, 1.5, std::nan("")}) EXPECT_THROW(mix(a, a, alpha), std::invalid_argument);
}

TEST(Mix, TensorAndImagePathsAgreeBitwise) {
  const Image a = random_image(3, 16, 16, 9), b = random_image(3, 16, 16, 10);
  const Tensor t = mix(to_batch({a}), to_batch({b}), 0.3);
  EXPECT_EQ(from_batch(t, 0).px, mix(a, b, 0.3).px);
}

TEST(Corpus, PairsSatisfyExactMixing) {
  Corpus corpus(42);
  for (std::size_t i = 0; i < 8; ++i) {
    const ImagePair p = corpus.pair(i, 0.3);
    ASSERT_EQ(p.y_c.height, 64u);
    ASSERT_EQ(p.x_c.height, 16u);
    for (std::size_t k = 0; k < p.x_in.size(); ++k) {
      ASSERT_EQ(p.x_in.px[k], p.x_d.px[k] + 0.3 * (p.x_c.px[k] - p.x_d.px[k]));
      ASSERT_GE(p.x_in.px[k], 0.0);
      ASSERT_LE(p.x_in.px[k], 1.0);
    }
  }
}

TEST(Corpus, UnpairedStreamUsesDifferentFaces) {
  Corpus corpus(42);
  const Sample s = corpus.sample(0);
  EXPECT_NE(corpus.unpaired_degraded(0).px, s.x_d.px);
  EXPECT_EQ(corpus.unpaired_degraded(3).px, corpus.unpaired_degraded(3).px);
}

TEST(Corpus, ManifestCsv) {
  Corpus corpus(42);
  const std::string m = corpus.manifest(4);
  EXPECT_EQ(m.rfind("index,face_seed,blur_sigma,motion_angle,motion_length,noise_sigma,quantization,noise_seed\n", 0), 0u);
  EXPECT_EQ(std::count(m.begin(), m.end(), '\n'), 5);
  EXPECT_EQ(m, Corpus(42).manifest(4));
  EXPECT_NE(m, Corpus(43).manifest(4));
}

// Golden value frozen from the first run of the pipeline.
TEST(Corpus, GoldenHashOfFirstSixteenSamples) {
  Corpus corpus(2024);
  const auto h = corpus.content_hash(16);
  EXPECT_EQ(h, Corpus(2024).content_hash(16));
  EXPECT_EQ(h, 0xf00dc022031b706aULL) << std::hex << h;
}

TEST(Images, BatchRoundTrip) {
  const Image a = random_image(3, 5, 7, 12), b = random_image(3, 5, 7, 13);
  const Tensor t = to_batch({a, b});
  EXPECT_EQ(t.shape(), (Shape{2, 3, 5, 7}));
  EXPECT_EQ(from_batch(t, 1).px, b.px);
  EXPECT_THROW(to_batch({a, Image(3, 4, 4)}), std::invalid_argument);
}

TEST(Images, PngRoundTrip) {
  const Image a = random_image(3, 9, 11, 14);
  const auto path = std::filesystem::temp_directory_path() / "smoothsr_png_roundtrip.png";
  write_png(path.string(), a);
  const Image b = read_png(path.string());
  ASSERT_TRUE(b.same_shape(a));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b.px[i], a.px[i], 0.5 / 255.0 + 1e-12);
  std::filesystem::remove(path);
  EXPECT_THROW(read_png("/nonexistent/x.png"), std::runtime_error);
}

TEST(Images, GridLayout) {
  const Image g = make_grid({Image(3, 4, 4, 0.0), Image(3, 4, 4, 0.0), Image(3, 4, 4, 0.0)}, 2);
  EXPECT_EQ(g.height, 9u);
  EXPECT_EQ(g.width, 9u);
  EXPECT_EQ(g.at(0, 4, 0), 1.0);
  EXPECT_EQ(g.at(0, 5, 5), 1.0);  // empty slot
  EXPECT_EQ(g.at(0, 5, 0), 0.0);
}
