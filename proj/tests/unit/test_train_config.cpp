#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "facenet/errors.hpp"
#include "facenet/train_config.hpp"

using namespace facenet;
using namespace facenet::train;

TEST(TrainConfig, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.epochs, 120);
  EXPECT_EQ(c.lr, 3.5e-4);
  EXPECT_EQ(c.lr_decay_epochs, (std::vector<int>{40, 70}));
  EXPECT_EQ(c.P, 8);
  EXPECT_EQ(c.K, 4);
  EXPECT_TRUE(c.ablation.use_mfmp && c.ablation.use_fmi && c.ablation.use_fce && c.ablation.use_ic);
  EXPECT_EQ(c.fce_mask_mode, fce::MaskMode::binary);
  EXPECT_EQ(c.ic_reduction, loss::IcReduction::per_sample);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, ParsesKeysAndRoundTrips) {
  const auto kv = KeyValueFile::parse(
      "epochs = 5\nlr=0.001\nlr_decay_epochs=2,4\nP=4\nK=2\nuse_fce=false\nuse_ic=false\n"
      "fce_mask_mode=soft\nic_reduction=per_batch\nvariant=tiny\nmask_mode=broadcast\nseed=12\n");
  const auto c = parse_train_config(kv);
  EXPECT_EQ(c.epochs, 5);
  EXPECT_EQ(c.lr, 0.001);
  EXPECT_EQ(c.lr_decay_epochs, (std::vector<int>{2, 4}));
  EXPECT_EQ(c.P, 4);
  EXPECT_FALSE(c.ablation.use_fce);
  EXPECT_EQ(c.fce_mask_mode, fce::MaskMode::soft);
  EXPECT_EQ(c.ic_reduction, loss::IcReduction::per_batch);
  EXPECT_EQ(c.mask_mode, mfmp::MaskMode::broadcast);
  EXPECT_EQ(c.seed, 12u);

  const auto again = parse_train_config(KeyValueFile::parse(to_key_values(c).serialize()));
  EXPECT_EQ(to_key_values(again).serialize(), to_key_values(c).serialize());
  EXPECT_EQ(again.lr, c.lr);
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_train_config(KeyValueFile::parse("epoch=3\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueFile::parse("lr=fast\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueFile::parse("use_mfmp=false\n")), ConfigError);  // fmi/fce need it
  EXPECT_THROW(parse_train_config(KeyValueFile::parse("K=1\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueFile::parse("lr_decay_epochs=70,40\n")), ConfigError);
  EXPECT_THROW(KeyValueFile::parse("a=1\na=2\n"), ConfigError);
}

TEST(TrainConfig, BaselineFlagsAreValid) {
  const auto c = parse_train_config(KeyValueFile::parse("use_mfmp=false\nuse_fmi=false\nuse_fce=false\nuse_ic=false\n"));
  EXPECT_FALSE(c.ablation.use_mfmp);
}

TEST(TrainConfig, LoadsFromFile) {
  const auto p = std::filesystem::temp_directory_path() / "facenet_train.cfg";
  std::ofstream(p) << "# short run\nepochs=2\n";
  EXPECT_EQ(load_train_config(p).epochs, 2);
  std::filesystem::remove(p);
  EXPECT_THROW(load_train_config(p), ConfigError);
}

TEST(Schedule, StepDecay) {
  const TrainConfig c;
  EXPECT_EQ(lr_at(1, c), 3.5e-4);
  EXPECT_EQ(lr_at(39, c), 3.5e-4);
  EXPECT_EQ(lr_at(40, c), 3.5e-5);
  EXPECT_EQ(lr_at(69, c), 3.5e-5);
  EXPECT_EQ(lr_at(70, c), 3.5e-6);
  EXPECT_EQ(lr_at(119, c), 3.5e-6);
  EXPECT_EQ(lr_at(120, c), 3.5e-6);
}

TEST(Schedule, NoDecayEpochs) {
  TrainConfig c;
  c.lr_decay_epochs.clear();
  EXPECT_EQ(lr_at(500, c), c.lr);
}
