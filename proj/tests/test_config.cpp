#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "pivotcap/config.hpp"

using namespace pivotcap;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, KeysAreUniqueAndDocumented) {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(names.insert(k.name).second) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
  }
  EXPECT_TRUE(names.count("align.rho_m"));
  EXPECT_TRUE(names.count("train.lambda_cap_end"));
}

TEST(Config, UnknownKeyIsNamed) {
  TrainingConfig cfg;
  const std::string msg = error_of([&] { set_config_value(cfg, "train.learnin_rate", "1"); });
  EXPECT_NE(msg.find("train.learnin_rate"), std::string::npos) << msg;
}

TEST(Config, BadValueIsNamed) {
  TrainingConfig cfg;
  const std::string msg = error_of([&] { set_config_value(cfg, "model.dim", "wide"); });
  EXPECT_NE(msg.find("model.dim"), std::string::npos) << msg;
  EXPECT_NE(error_of([&] { set_config_value(cfg, "model.use_sg", "maybe"); }), "");
}

TEST(Config, RenderLoadRoundTrip) {
  TrainingConfig cfg;
  set_config_value(cfg, "align.tau_m", "0.37");
  set_config_value(cfg, "train.stage3_steps", "11");
  set_config_value(cfg, "model.fusion", "literal");
  set_config_value(cfg, "oracle.translator", "subprocess:cat -u");
  const fs::path p = fs::temp_directory_path() / "pivotcap_test_roundtrip.cfg";
  std::ofstream(p) << render_config(cfg);
  const TrainingConfig back = load_config(p);
  EXPECT_EQ(render_config(back), render_config(cfg));
  EXPECT_EQ(config_fingerprint(back), config_fingerprint(cfg));
  EXPECT_EQ(back.align.tau_m, 0.37);
  EXPECT_EQ(back.translator, "subprocess:cat -u");
}

TEST(Config, FingerprintTracksValues) {
  TrainingConfig a, b;
  EXPECT_EQ(config_fingerprint(a), config_fingerprint(b));
  b.seed = 2;
  EXPECT_NE(config_fingerprint(a), config_fingerprint(b));
}

TEST(Config, TextCommentsAndErrorsWithLines) {
  TrainingConfig cfg;
  apply_config_text(cfg, "# header\n\nseed = 5   # trailing\nmodel.heads=4\n", "inline");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.model.heads, 4u);
  const std::string msg = error_of([&] { apply_config_text(cfg, "seed = 1\nnot a pair\n", "inline"); });
  EXPECT_NE(msg.find("inline:2"), std::string::npos) << msg;
}

TEST(Config, ValidationRejectsBadRanges) {
  TrainingConfig cfg;
  cfg.align.tau_m = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.align.rho_l = 1.5;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.model.heads = 3;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.stage_lr_scale[1] = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  EXPECT_NO_THROW(validate(TrainingConfig{}));
}

TEST(Config, MissingFileIsNamed) {
  try {
    load_config("/nonexistent/run.cfg");
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.cfg"), std::string::npos);
  }
}
