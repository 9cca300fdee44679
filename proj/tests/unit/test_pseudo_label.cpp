#include <gtest/gtest.h>

#include <random>

#include "facenet/errors.hpp"
#include "facenet/pseudo_label.hpp"

using namespace facenet;
using namespace facenet::pseudo;

TEST(Delta, AllZeroImage) { EXPECT_EQ(compute_delta(Image(16, 16, 1, 0)), 0.0); }

TEST(Delta, AllSaturatedImage) { EXPECT_EQ(compute_delta(Image(16, 16, 3, 255)), 1.0); }

TEST(Delta, ThirteenBrightPixelsOfSixtyFour) {
  Image img(8, 8, 1, 100);
  for (int i = 0; i < 13; ++i) img.at(i / 8, i % 8) = 252;
  EXPECT_DOUBLE_EQ(compute_delta(img), 13.0 / 64.0);
  EXPECT_DOUBLE_EQ(compute_delta(img), 0.203125);
}

TEST(Delta, BoundaryOfBrightBand) {
  Image img(1, 4, 1, 0);
  img.at(0, 0) = 249;
  img.at(0, 1) = 250;
  img.at(0, 2) = 255;
  EXPECT_DOUBLE_EQ(compute_delta(img), 0.5);
}

TEST(Delta, ColourPixelCountsOnceWhenAnyChannelIsBright) {
  Image img(1, 2, 3, 0);
  img.at(0, 0, 2) = 251;
  EXPECT_DOUBLE_EQ(compute_delta(img), 0.5);
}

TEST(Delta, MatchesCountingOracleOnRandomImages) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> px(200, 255);
  for (int trial = 0; trial < 20; ++trial) {
    Image img(13, 7, trial % 2 ? 3 : 1);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(px(rng));
    int bright = 0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        bool any = false;
        for (int c = 0; c < img.channels; ++c) any = any || img.at(y, x, c) >= 250;
        bright += any ? 1 : 0;
      }
    EXPECT_EQ(compute_delta(img), static_cast<double>(bright) / (13.0 * 7.0));
  }
}

TEST(Delta, EmptyImageThrows) { EXPECT_THROW(compute_delta(Image()), ValidationError); }

TEST(Label, StrictlyAboveBar) {
  EXPECT_FALSE(flare_label(0.05, 0.10));
  EXPECT_TRUE(flare_label(0.20, 0.10));
  EXPECT_FALSE(flare_label(0.10, 0.10));
  const auto l = make_label(0.3);
  EXPECT_TRUE(l.is_flare);
  EXPECT_EQ(l.delta, 0.3);
}

TEST(Label, SampleFlagIsDisjunction) {
  EXPECT_FALSE(sample_flare_flag(0.0, 0.0));
  EXPECT_TRUE(sample_flare_flag(0.2, 0.0));
  EXPECT_TRUE(sample_flare_flag(0.0, 0.15));
  EXPECT_TRUE(sample_flare_flag(0.5, 0.5));
}
