#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>

#include <dynamix/checkpoint.hpp>

using namespace dynamix;

TEST(Checkpoint, RoundTripIsExact) {
  PolicyParams p = make_policy(8, 32);
  p.version = 17;
  const std::string bytes = encode_checkpoint(p);
  const PolicyParams q = decode_checkpoint(bytes);
  EXPECT_EQ(q.version, 17u);
  EXPECT_EQ(q.flatten(), p.flatten());
  EXPECT_EQ(encode_checkpoint(q), bytes);
  EXPECT_EQ(bytes.substr(0, 8), std::string("DYNXPOL\0", 8));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "dynamix_ckpt_test.bin";
  PolicyParams p = make_policy(3);
  p.version = 2;
  save_checkpoint(p, path.string());
  EXPECT_EQ(load_checkpoint(path.string()).flatten(), p.flatten());
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), CheckpointError);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const std::string good = encode_checkpoint(make_policy(4, 8));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CheckpointError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 3)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(good + "z"), CheckpointError);
  std::string bad_format = good;
  bad_format[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad_format), CheckpointError);
  EXPECT_THROW(decode_checkpoint(""), CheckpointError);
}

TEST(Checkpoint, DimensionMismatchIsRejected) {
  const std::string other = encode_checkpoint(make_policy(1, 8, 10));
  EXPECT_THROW(decode_checkpoint(other), CheckpointError);
  EXPECT_NO_THROW(decode_checkpoint(other, 10));
}

TEST(Checkpoint, NonFiniteWeightsAreRejected) {
  PolicyParams p = make_policy(1, 4);
  p.layers[1].bias[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(p)), CheckpointError);
}
