#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <sstream>

#include "simdino/trainer.hpp"

using namespace simdino;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.views.global = CropConfig{0.4, 1.0, 0.75, 4.0 / 3.0, 16};
  c.views.local = CropConfig{0.1, 0.4, 0.75, 4.0 / 3.0, 8};
  c.views.local_count = 2;
  c.views.patch = 4;
  c.encoder.patch_dim = 48;
  c.encoder.max_grid = 4;
  c.encoder.embed_dim = 8;
  c.encoder.depth = 1;
  c.encoder.heads = 2;
  c.encoder.mlp_hidden = 8;
  c.encoder.proj_hidden = 8;
  c.encoder.out_dim = 6;
  c.encoder.init_std = 0.5;
  c.loss.prototypes = 16;
  c.batch_size = 4;
  c.steps = 4;
  c.warmup_steps = 1;
  c.lr = 0.01;
  c.seed = 5;
  return c;
}

const Dataset& data() {
  static const Dataset ds = [] {
    SyntheticSpec s;
    s.classes = 2;
    s.per_class = 6;
    s.size = 20;
    s.radius_min = 3;
    s.radius_max = 6;
    s.seed = 1;
    return generate_synthetic(s);
  }();
  return ds;
}

bool same_params(const EncoderParams& a, const EncoderParams& b) {
  std::vector<Matrix> x, y;
  a.visit([&](const std::string&, const Matrix& m) { x.push_back(m); });
  b.visit([&](const std::string&, const Matrix& m) { y.push_back(m); });
  return x == y;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("simdino_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Ema, ClosedForm) {
  Rng rng(1);
  const auto cfg = tiny(TrainMode::SimDino).encoder;
  const auto a = init_encoder(cfg, rng), b = init_encoder(cfg, rng);
  EXPECT_TRUE(same_params(ema_update(a, b, 1.0), a));
  EXPECT_TRUE(same_params(ema_update(a, b, 0.0), b));
  const auto m = ema_update(a, b, 0.25);
  EXPECT_DOUBLE_EQ(m.head1_w.data[3], 0.25 * a.head1_w.data[3] + 0.75 * b.head1_w.data[3]);
  EXPECT_THROW(ema_update(a, b, 1.5), Error);
}

TEST(Trainer, ModesParse) {
  EXPECT_EQ(parse_train_mode("no-distill"), TrainMode::NoDistill);
  EXPECT_EQ(parse_train_mode("dino_baseline"), TrainMode::DinoBaseline);
  EXPECT_THROW(parse_train_mode("byol"), Error);
}

TEST(Trainer, RunsAreDeterministic) {
  for (auto mode : {TrainMode::SimDino, TrainMode::SimDinoV2, TrainMode::DinoBaseline, TrainMode::NoDistill}) {
    const auto cfg = tiny(mode);
    const auto a = run_training(cfg, data()), b = run_training(cfg, data());
    ASSERT_EQ(a.metrics.size(), 4u) << to_string(mode);
    EXPECT_EQ(a.metrics, b.metrics) << to_string(mode);
    EXPECT_TRUE(same_params(a.state.teacher, b.state.teacher)) << to_string(mode);
    for (const auto& m : a.metrics) EXPECT_TRUE(std::isfinite(m.loss)) << to_string(mode);
  }
}

TEST(Trainer, TeacherIsAnEmaOfTheStudent) {
  auto cfg = tiny(TrainMode::SimDino);
  cfg.warmup_steps = 0;
  TrainState st = init_train_state(cfg);
  const EncoderParams teacher0 = st.teacher;
  const auto batch = draw_batch(st, data(), cfg.batch_size);
  const auto m = train_step(st, data(), batch, cfg);
  EXPECT_DOUBLE_EQ(m.lambda, cfg.momentum);
  EXPECT_FALSE(same_params(st.student, teacher0));
  EXPECT_TRUE(same_params(st.teacher, ema_update(teacher0, st.student, m.lambda)));
}

TEST(Trainer, NoDistillTeacherTracksStudent) {
  const auto r = run_training(tiny(TrainMode::NoDistill), data());
  EXPECT_TRUE(same_params(r.state.teacher, r.state.student));
  for (const auto& m : r.metrics) EXPECT_EQ(m.lambda, 0.0);
}

TEST(Trainer, GammaIsCalibratedOnceThenFrozen) {
  auto cfg = tiny(TrainMode::SimDino);
  const auto r = run_training(cfg, data());
  EXPECT_GT(r.metrics[0].gamma, 0.0);
  for (const auto& m : r.metrics) EXPECT_EQ(m.gamma, r.metrics[0].gamma);
  cfg.calibrate_gamma = false;
  cfg.loss.gamma = 0.3;
  EXPECT_EQ(run_training(cfg, data()).metrics[2].gamma, 0.3);
}

TEST(Trainer, BaselineCenterFreezes) {
  auto cfg = tiny(TrainMode::DinoBaseline);
  EXPECT_GT(init_train_state(cfg).student.prototypes.size(), 0u);
  EXPECT_EQ(init_train_state(tiny(TrainMode::SimDino)).student.prototypes.size(), 0u);
  const auto moving = run_training(cfg, data());
  double norm = 0;
  for (double v : moving.state.center.center) norm += std::abs(v);
  EXPECT_GT(norm, 0.0);
  cfg.center_frozen = true;
  for (double v : run_training(cfg, data()).state.center.center) EXPECT_EQ(v, 0.0);
}

TEST(Trainer, PatchAuditReproducesReportedTerm) {
  auto cfg = tiny(TrainMode::SimDinoV2);
  cfg.loss.mask_sample_prob = 1.0;
  std::size_t audits = 0;
  RunOptions opts;
  opts.on_audit = [&](const PatchAudit& a) {
    ++audits;
    double total = 0;
    for (std::size_t g = 0; g < a.masks.size(); ++g) {
      double term = 0;
      const auto& s = a.student_patches[g];
      const auto& t = a.teacher_patches[g];
      for (std::size_t c = 0; c < s.cols; ++c) {
        if (!a.masks[g][c]) continue;
        double dot = 0;
        for (std::size_t r = 0; r < s.rows; ++r) dot += s(r, c) * t(r, c);
        term += 1.0 - dot;
      }
      total += term / static_cast<double>(s.cols);
    }
    EXPECT_NEAR(total / static_cast<double>(a.masks.size()), a.reported, 1e-13);
  };
  const auto r = run_training(cfg, data(), opts);
  EXPECT_EQ(audits, 4u);
  for (const auto& m : r.metrics) EXPECT_GT(m.masked_patches, 0u);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const fs::path dir = scratch("resume");
  const auto cfg = tiny(TrainMode::SimDinoV2);
  RunOptions opts;
  opts.checkpoint_dir = dir.string();
  opts.checkpoint_every = 2;
  opts.config_hash = 42;
  const auto full = run_training(cfg, data(), opts);
  const auto resumed = run_training(cfg, data(), {}, load_checkpoint((dir / "checkpoint_000002.bin").string(), 42));
  ASSERT_EQ(resumed.metrics.size(), 2u);
  EXPECT_EQ(resumed.metrics[0], full.metrics[2]);
  EXPECT_EQ(resumed.metrics[1], full.metrics[3]);
  EXPECT_TRUE(same_params(resumed.state.student, full.state.student));
}

TEST(Trainer, CheckpointRoundTripAndHashCheck) {
  auto cfg = tiny(TrainMode::DinoBaseline);
  cfg.steps = 1;
  const auto r = run_training(cfg, data());
  const std::string bytes = serialize_checkpoint(r.state, 7);
  const TrainState back = deserialize_checkpoint(bytes, 7, "mem");
  EXPECT_EQ(serialize_checkpoint(back, 7), bytes);
  EXPECT_EQ(back.rng, r.state.rng);
  EXPECT_EQ(back.center.center, r.state.center.center);
  try {
    deserialize_checkpoint(bytes, 8, "mem");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("does not match config hash"), std::string::npos) << e.what();
  }
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2), 7, "mem"), Error);
  EXPECT_THROW(deserialize_checkpoint("garbage", 7, "mem"), Error);
}

TEST(Trainer, HugeStepSizeDiverges) {
  auto cfg = tiny(TrainMode::SimDino);
  cfg.lr = 1e200;
  cfg.clip = 0.0;
  try {
    run_training(cfg, data());
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.step, 2u);  // step 0 sits at the bottom of the warmup, step 1 applies the update
  }
}

TEST(Trainer, NonFinitePixelIsADataError) {
  Dataset ds = data();
  for (auto& im : ds.images) im.pixels[5] = std::nan("");
  try {
    run_training(tiny(TrainMode::SimDino), ds);
    FAIL();
  } catch (const TrainingDiverged&) {
    FAIL() << "reported as divergence";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite pixel"), std::string::npos) << e.what();
  }
}

TEST(Trainer, MetricsRowsMatchHeader) {
  std::ostringstream os;
  write_metrics_header(os);
  StepMetrics m;
  m.loss = 0.1;
  write_metrics_row(os, m);
  std::istringstream in(os.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(row.substr(0, 6), "0,0.10");
}

TEST(Trainer, RejectsBadConfigs) {
  auto cfg = tiny(TrainMode::SimDino);
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = tiny(TrainMode::SimDino);
  cfg.momentum = 1.2;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = tiny(TrainMode::SimDino);
  cfg.loss.gamma = -1;
  EXPECT_THROW(cfg.validate(), Error);
}
