#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "asvkit/error.hpp"
#include "asvkit/model.hpp"
#include "asvkit/synthetic.hpp"
#include "support.hpp"

using namespace asv;
using nn::Tensor;

namespace {

Tensor random_tensor(nn::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(nn::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

WindowInput random_window(const ModelConfig& c, Rng& rng) {
  WindowInput w;
  for (std::size_t i = 0; i < kWindowSize; ++i) {
    w.features[i] = random_tensor({c.frames, c.features.width()}, rng);
    w.images[i] = random_tensor({1, c.image_size, c.image_size}, rng, 0.0, 1.0);
  }
  return w;
}

double sum_of(const Tensor& t) {
  const auto d = t.data();
  return std::accumulate(d.begin(), d.end(), 0.0);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Clips synthesized in memory from the record, so no audio files are needed.
AudioClip clip_for(const UtteranceRecord& r) {
  Rng rng(std::hash<std::string>{}(r.utterance_id));
  auto clip = synthesize_utterance(r.label_score >= 0.0, 0.5, kCanonicalSampleRate, rng);
  clip.utterance_id = r.utterance_id;
  return clip;
}

Manifest small_manifest() {
  std::vector<UtteranceRecord> recs;
  const double scores[] = {1.5, -2.0, 0.5, -0.5, 2.5};
  for (int i = 0; i < 5; ++i) {
    const std::string vid = i < 3 ? "va" : "vb";
    const int pos = i < 3 ? i : i - 3;
    recs.push_back({"u" + std::to_string(i), vid, pos, "mem", scores[i]});
  }
  return make_manifest(std::move(recs));
}

ModelConfig small_config() {
  auto c = ModelConfig::miniature();
  c.frames = 64;
  return c;
}

}  // namespace

TEST(ModelConfig, DefaultsAndMiniature) {
  const ModelConfig c;
  EXPECT_EQ(c.utterance_vector_size(), 64u);
  EXPECT_EQ(c.dense_hidden, 200u);
  EXPECT_EQ(c.features.width(), 33u);
  EXPECT_NO_THROW(c.validate());
  const auto m = ModelConfig::miniature();
  EXPECT_EQ(m.aff1_hidden1, 4u);
  EXPECT_EQ(m.aff1_hidden2, 2u);
  EXPECT_EQ(m.image_size, 32u);
  EXPECT_EQ(m.cnn_channels.size() * m.cnn_blocks_per_stage, 2u);
}

TEST(ModelConfig, TextRoundTrip) {
  auto c = ModelConfig::miniature();
  c.n_classes = 7;
  c.bidirectional = false;
  c.features = dsp::FeatureSet::parse("rmse,tonnetz");
  EXPECT_EQ(ModelConfig::from(KeyValues::parse(c.to_text())), c);
}

TEST(ModelConfig, RejectsBadClassCount) {
  auto c = ModelConfig::miniature();
  c.n_classes = 3;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(Model(c, 1), Error);
}

TEST(Model, DefaultShapes) {
  const ModelConfig config;
  Model model(config, 3);
  Rng rng(1);
  const auto input = random_window(config, rng);
  const auto lasv = model.lasv_forward(input.features, false);
  for (const auto& v : lasv.utterance_vectors) EXPECT_EQ(v.size(), 64u);
  const auto casv = model.casv_forward(input.images, false);
  EXPECT_EQ(casv.embeddings[0].size(), config.cnn_channels.back());
  const auto fused = model.fuse_forward(lasv.lasv, casv.casv, false);
  EXPECT_EQ(fused.asv.size(), 200u);
  EXPECT_EQ(fused.probabilities.size(), 2u);
  EXPECT_NEAR(sum_of(fused.probabilities), 1.0, 1e-12);
  EXPECT_NEAR(sum_of(lasv.alpha), 1.0, 1e-12);
  EXPECT_NEAR(sum_of(casv.alpha), 1.0, 1e-12);
  EXPECT_NEAR(sum_of(fused.alpha), 1.0, 1e-12);
}

TEST(Model, ClassCountSetsOutputLength) {
  for (std::size_t n : {2u, 5u, 7u}) {
    auto config = small_config();
    config.n_classes = n;
    Model model(config, 2);
    Rng rng(2);
    const auto out = model.logits(random_window(config, rng), Head::Fused, false);
    EXPECT_EQ(out.size(), n);
  }
}

TEST(Model, IdenticalUtterancesGiveUniformAttention) {
  for (bool bi : {true, false}) {
    auto config = small_config();
    config.bidirectional = bi;
    Model model(config, 4);
    Rng rng(5);
    const auto same = random_tensor({config.frames, config.features.width()}, rng);
    const auto out = model.lasv_forward({same, same, same}, false);
    for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(out.alpha[t], 1.0 / 3.0, 1e-9);
  }
}

TEST(Model, ZeroImagesGiveUniformAttention) {
  const auto config = small_config();
  Model model(config, 6);
  const auto zero = Tensor::zeros({1, config.image_size, config.image_size});
  const auto out = model.casv_forward({zero, zero, zero}, false);
  EXPECT_EQ(values(out.embeddings[0]), values(out.embeddings[2]));
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(out.alpha[t], 1.0 / 3.0, 1e-9);
}

TEST(Model, OuterPermutationChangesCasv) {
  const auto config = small_config();
  Model model(config, 7);
  Rng rng(7);
  const auto a = random_tensor({1, 32, 32}, rng, 0, 1);
  const auto b = random_tensor({1, 32, 32}, rng, 0, 1);
  const auto c = random_tensor({1, 32, 32}, rng, 0, 1);
  const auto x = values(model.casv_forward({a, b, c}, false).casv);
  const auto y = values(model.casv_forward({c, b, a}, false).casv);
  EXPECT_NE(x, y);
}

TEST(Model, DeterministicForSeed) {
  const auto config = small_config();
  Model m1(config, 11), m2(config, 11);
  Rng r1(3), r2(3);
  const auto a = m1.logits(random_window(config, r1), Head::Fused, false);
  const auto b = m2.logits(random_window(config, r2), Head::Fused, false);
  EXPECT_EQ(values(a), values(b));
  // Evaluation mode is a pure function of weights and inputs.
  Rng r3(3);
  const auto input = random_window(config, r3);
  EXPECT_EQ(values(m1.logits(input, Head::Fused, false)), values(m1.logits(input, Head::Fused, false)));
}

TEST(Model, WrongShapesRejected) {
  const auto config = small_config();
  Model model(config, 1);
  Rng rng(1);
  const auto bad_image = Tensor::zeros({1, 16, 16});
  EXPECT_THROW(model.casv_forward({bad_image, bad_image, bad_image}, false), Error);
  const auto bad_features = Tensor::zeros({config.frames, 5});
  EXPECT_THROW(model.lasv_forward({bad_features, bad_features, bad_features}, false), Error);
  try {
    model.fuse_forward(Tensor::zeros({3}), Tensor::zeros({config.casv_size()}), false);
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

TEST(Model, BranchParametersAreSubsets) {
  Model model(small_config(), 1);
  const auto all = model.parameters();
  const auto lstm = model.parameters(Head::LstmBranch);
  const auto cnn = model.parameters(Head::CnnBranch);
  EXPECT_LT(lstm.size(), all.size());
  EXPECT_LT(cnn.size(), all.size());
  for (const auto& p : lstm) {
    EXPECT_TRUE(std::any_of(all.begin(), all.end(),
                            [&](const auto& q) { return q.tensor.same_storage(p.tensor); }))
        << p.name;
  }
}

TEST(Model, GradientCheckMiniature) {
  const auto report = model_gradient_check(ModelConfig::miniature(), 5, 3);
  EXPECT_LT(report.max_rel_error(), 1e-3);
}

TEST(FeatureStoreTest, WindowsStayInsideVideo) {
  const auto manifest = small_manifest();
  const auto config = small_config();
  FeatureStore store(config.frames, config.image_size, clip_for);
  store.precompute(manifest, 2);
  // u3 is the first utterance of video vb; its window must not reach into va.
  const auto w = store.window_input(manifest, "u3", config.features);
  const auto own = store.window_input(manifest, "u4", config.features);
  EXPECT_EQ(values(w.features[0]), values(w.features[1]));
  EXPECT_EQ(values(w.features[2]), values(own.features[1]));
  EXPECT_EQ(w.features[0].shape(), (nn::Shape{64, 33}));
  EXPECT_EQ(w.images[0].shape(), (nn::Shape{1, 32, 32}));
}

TEST(Predict, ArgmaxAndDeterminism) {
  const auto manifest = small_manifest();
  const auto config = small_config();
  Model model(config, 9);
  FeatureStore store(config.frames, config.image_size, clip_for);
  for (const auto& r : manifest.records) {
    const auto p = predict(model, store, manifest, r.utterance_id);
    EXPECT_EQ(p.label, argmax(p.probabilities));
    EXPECT_NEAR(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(p.asv.size(), config.dense_hidden);
    const auto again = predict(model, store, manifest, r.utterance_id);
    EXPECT_EQ(again.probabilities, p.probabilities);
  }
  try {
    predict(model, store, manifest, "ghost");
    FAIL() << "expected an unknown-utterance error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownUtterance);
  }
}

TEST(Predict, TiesGoToLowerIndex) {
  const std::vector<double> tie = {0.25, 0.5, 0.5};
  EXPECT_EQ(argmax(tie), 1u);
}

TEST(ExportAsv, CountOrderAndBitwiseRepeat) {
  testing_support::TempDir dir("export");
  const auto manifest = small_manifest();
  const auto config = small_config();
  Model model(config, 10);
  FeatureStore store(config.frames, config.image_size, clip_for);
  export_asv(model, store, manifest, dir.file("a.asv"));
  export_asv(model, store, manifest, dir.file("b.asv"));
  const auto recs = read_asv_records(dir.file("a.asv"));
  ASSERT_EQ(recs.size(), manifest.records.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].utterance_id, manifest.records[i].utterance_id);
    EXPECT_EQ(recs[i].values.size(), config.dense_hidden);
  }
  EXPECT_EQ(testing_support::read_bytes(dir.file("a.asv")),
            testing_support::read_bytes(dir.file("b.asv")));
}

TEST(ExportAsv, DefaultWidthIs200) {
  testing_support::TempDir dir("export200");
  std::vector<UtteranceRecord> recs = {{"x0", "v", 0, "mem", 1.0}, {"x1", "v", 1, "mem", -1.0}};
  const auto manifest = make_manifest(recs);
  ModelConfig config;
  config.image_size = 64;
  Model model(config, 1);
  FeatureStore store(config.frames, config.image_size, clip_for);
  export_asv(model, store, manifest, dir.file("d.asv"));
  for (const auto& r : read_asv_records(dir.file("d.asv"))) EXPECT_EQ(r.values.size(), 200u);
}

TEST(SaveLoad, RoundTripAndMismatch) {
  testing_support::TempDir dir("model");
  const auto config = small_config();
  Model a(config, 12);
  save_model(dir.file("m.asvm"), a);
  EXPECT_EQ(checkpoint_config(dir.file("m.asvm")), config);

  Model b(config, 99);
  load_model(dir.file("m.asvm"), b);
  Rng r1(4);
  const auto input = random_window(config, r1);
  EXPECT_EQ(values(a.logits(input, Head::Fused, false)), values(b.logits(input, Head::Fused, false)));

  auto other = config;
  other.context_hidden = 3;
  Model c(other, 1);
  try {
    load_model(dir.file("m.asvm"), c);
    FAIL() << "expected a dimension mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
  }
}
