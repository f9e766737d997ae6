#include <gtest/gtest.h>

#include <algorithm>

#include "simdino/config.hpp"

using namespace simdino;

namespace {
std::string error_of(const std::string& text) {
  try {
    parse_config(text, "run.cfg");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}
}  // namespace

TEST(Config, DefaultsSerializeAndParseBack) {
  const RunConfig def;
  const std::string text = serialize_config(def);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
  EXPECT_EQ(config_hash(parse_config(text)), config_hash(def));
  EXPECT_EQ(config_keys().size(), static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')));
}

TEST(Config, ParsesValuesAndComments) {
  const RunConfig c = parse_config(
      "# comment line\n"
      "mode = simdinov2\n"
      "\n"
      "optim.lr = 0.0005   # trailing comment\n"
      "loss.calibrate_gamma = false\n"
      "loss.gamma = 0.25\n"
      "model.embed_dim=48\n");
  EXPECT_EQ(c.train.mode, TrainMode::SimDinoV2);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.0005);
  EXPECT_FALSE(c.train.calibrate_gamma);
  EXPECT_DOUBLE_EQ(c.train.loss.gamma, 0.25);
  EXPECT_EQ(c.train.encoder.embed_dim, 48u);
}

TEST(Config, RoundTripsNonDefaultValues) {
  RunConfig c;
  set_config_value(c, "optim.momentum", "0.123456789012345678");
  set_config_value(c, "data.path", "some/dir");
  set_config_value(c, "views.include_same_view", "true");
  const RunConfig back = parse_config(serialize_config(c));
  EXPECT_EQ(back.train.momentum, c.train.momentum);
  EXPECT_EQ(back.data_path, "some/dir");
  EXPECT_TRUE(back.train.include_same_view);
}

TEST(Config, ErrorsNameFieldAndLine) {
  EXPECT_NE(error_of("optim.lr = 0.1\nloss.gamma = -1\n").find("run.cfg:2: field 'loss.gamma'"), std::string::npos);
  EXPECT_NE(error_of("\n\nmodel.colour = red\n").find("run.cfg:3: unknown key 'model.colour'"), std::string::npos);
  EXPECT_NE(error_of("optim.lr = 0.1\noptim.lr = 0.2\n").find("run.cfg:2: field 'optim.lr' is set twice"),
            std::string::npos);
  EXPECT_NE(error_of("optim.lr 0.1\n").find("run.cfg:1: expected 'key = value'"), std::string::npos);
  EXPECT_NE(error_of("optim.steps = -3\n").find("optim.steps"), std::string::npos);
  EXPECT_NE(error_of("optim.lr = nan\n").find("optim.lr"), std::string::npos);
  EXPECT_NE(error_of("mode = dino\n").find("'mode'"), std::string::npos);
  EXPECT_NE(error_of("loss.centered_covariance = yes\n").find("true or false"), std::string::npos);
}

TEST(Config, CrossFieldValidation) {
  EXPECT_NE(error_of("model.embed_dim = 30\nmodel.heads = 4\n").find("divisible"), std::string::npos);
  EXPECT_FALSE(error_of("model.patch_size = 5\n").empty());
}

TEST(Config, HashIgnoresEvalAndOutput) {
  RunConfig a, b;
  set_config_value(b, "out_dir", "elsewhere");
  set_config_value(b, "eval.k", "5");
  set_config_value(b, "run.checkpoint_every", "7");
  EXPECT_EQ(config_hash(a), config_hash(b));
  set_config_value(b, "seed", "9");
  EXPECT_NE(config_hash(a), config_hash(b));
}
