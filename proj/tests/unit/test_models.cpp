#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "test_support.hpp"
#include "wildfire/errors.hpp"
#include "wildfire/models.hpp"

using namespace wildfire;
using namespace wildfire::testing;
namespace nn = wildfire::nn;

namespace {

std::vector<WindowSample> samples_for(int window, int size = 32, int count = 2) {
  auto cfg = small_synth({2018}, 1, size, 21);
  cfg.max_days = window + count;
  const auto events = generate_events(cfg);
  auto s = window_samples(events[0], window, FeatureSet::named("All", events[0].schema));
  s.resize(count);
  return normalize(s, compute_channel_stats(s));
}

template <typename S>
ModelInput<S> input_of(const std::vector<WindowSample>& samples) {
  std::vector<const WindowSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_input<S>(ptrs);
}

ModelConfig config(Fusion fusion, int window, EncoderFamily family = EncoderFamily::residual_conv) {
  ModelConfig c;
  c.fusion = fusion;
  c.window = window;
  c.encoder_family = family;
  return c;
}

ModelConfig tiny(Fusion fusion, int window, EncoderFamily family = EncoderFamily::residual_conv) {
  ModelConfig c = config(fusion, window, family);
  c.encoder_widths = {4, 4, 8, 8};
  c.decoder_widths = {4, 4, 4};
  c.attention_heads = 2;
  c.attention_window = 2;
  return c;
}

template <typename S>
bool same_values(const nn::Tensor<S>& a, const nn::Tensor<S>& b) {
  return a.shape() == b.shape() && a.values() == b.values();
}

double max_abs_diff(const nn::Tensor<float>& a, const nn::Tensor<float>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("positional encoding values") {
    const auto zero = positional_encoding(0, 4);
    CHECK(zero == std::vector<double>{0, 1, 0, 1});
    const auto one = positional_encoding(1, 4);
    CHECK(one[0] == doctest::Approx(0.841471).epsilon(1e-6));
    CHECK(one[1] == doctest::Approx(0.540302).epsilon(1e-6));
    CHECK(one[2] == doctest::Approx(0.010000).epsilon(1e-4));
    CHECK(one[3] == doctest::Approx(0.999950).epsilon(1e-6));
    CHECK_THROWS_AS(positional_encoding(1, 3), ConfigError);
  }

  TEST_CASE("parameter counts") {
    // stem 512, stages 5808 + 23136 + 92352, decoder 27680 + 6928 + 1736 + 9
    CHECK(expected_parameter_count(ModelConfig{}) == 158161);
    for (auto family : {EncoderFamily::residual_conv, EncoderFamily::windowed_attention}) {
      for (auto [fusion, window] : {std::pair{Fusion::none, 1}, {Fusion::data, 5}, {Fusion::feature, 5}}) {
        const auto cfg = config(fusion, window, family);
        const Model<float> m(cfg, 1);
        CHECK(m.parameter_count() == expected_parameter_count(cfg));
      }
    }
    // data fusion widens only the stem
    CHECK(expected_parameter_count(config(Fusion::data, 5)) - expected_parameter_count(ModelConfig{}) ==
          7 * 4 * 8 * 9);
    // feature fusion adds a 64x64 key projection and 64 query entries
    CHECK(expected_parameter_count(config(Fusion::feature, 5)) - expected_parameter_count(ModelConfig{}) ==
          64 * 64 + 64);
  }

  TEST_CASE("shapes") {
    const auto samples = samples_for(1, 64, 2);
    for (auto family : {EncoderFamily::residual_conv, EncoderFamily::windowed_attention}) {
      const Model<float> m(config(Fusion::none, 1, family), 3);
      const auto in = input_of<float>(samples);
      nn::NoGradGuard g;
      const auto f = m.encode(nn::constant(in.days[0]));
      CHECK(f.scales[3]->value.shape() == std::vector<int>{2, 64, 8, 8});
      CHECK(f.scales[0]->value.shape() == std::vector<int>{2, 8, 64, 64});
      const auto logits = m.forward(in);
      CHECK(logits->value.shape() == std::vector<int>{2, 1, 64, 64});
      for (float v : logits->value.values()) CHECK(std::isfinite(v));
      CHECK(m.embed(in).shape() == std::vector<int>{2, 64});
    }
  }

  TEST_CASE("data fusion packing") {
    const auto samples = samples_for(5, 16, 1);
    const auto in = input_of<float>(samples);
    const auto packed = pack_data_fusion(in);
    REQUIRE(packed.shape() == std::vector<int>{1, 35, 16, 16});
    for (int j = 0; j < 5; ++j) {
      for (int k = 0; k < 7; ++k) {
        const auto src = samples[0].plane(j, k);
        CHECK(std::equal(src.begin(), src.end(), packed.data() + (j * 7 + k) * 256));
      }
    }
    const auto in1 = input_of<float>(samples_for(1, 16, 1));
    CHECK(same_values(pack_data_fusion(in1), in1.days[0]));
  }

  TEST_CASE("data fusion with one day equals the plain model") {
    const auto in = input_of<float>(samples_for(1));
    const Model<float> plain(config(Fusion::none, 1), 5);
    const Model<float> data(config(Fusion::data, 1), 5);
    nn::NoGradGuard g;
    CHECK(same_values(plain.forward(in)->value, data.forward(in)->value));
  }

  TEST_CASE("LTAE with one day is the identity") {
    const auto in = input_of<float>(samples_for(1));
    const Model<float> m(config(Fusion::feature, 1), 6);
    nn::NoGradGuard g;
    const auto day = m.encode(nn::constant(in.days[0]));
    const auto out = m.ltae_fuse({day}, in.day_of_year);
    for (float v : out.mask->value.values()) CHECK(v == 1.0f);
    for (int s = 0; s < 4; ++s) CHECK(same_values(out.fused.scales[s]->value, day.scales[s]->value));
    // and the full forward equals decoding the single day's features
    CHECK(same_values(m.forward(in)->value, m.decode(day)->value));
  }

  TEST_CASE("LTAE mask normalization") {
    const auto samples = samples_for(4);
    const auto in = input_of<float>(samples);
    const Model<float> m(config(Fusion::feature, 4), 7);
    nn::NoGradGuard g;
    LtaeOutput<float> lt;
    m.forward(in, &lt);
    const auto& shape = lt.mask->value.shape();
    REQUIRE(shape == std::vector<int>{4, 2, 4, 4, 4});
    const std::size_t block = lt.mask->value.size() / 4;
    for (std::size_t i = 0; i < block; ++i) {
      double sum = 0;
      for (int t = 0; t < 4; ++t) sum += lt.mask->value[t * block + i];
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    // identical days and identical positions give a uniform mask
    const auto day = m.encode(nn::constant(in.days[0]));
    std::vector<std::vector<int>> same_day(2, std::vector<int>(4, 100));
    ModelConfig abs_cfg = config(Fusion::feature, 4);
    abs_cfg.pe_mode = PositionalMode::absolute_day_of_year;
    const Model<float> ma(abs_cfg, 7);
    const auto uni = ma.ltae_fuse({day, day, day, day}, same_day);
    for (float v : uni.mask->value.values()) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));
  }

  TEST_CASE("calendar shift") {
    const auto samples = samples_for(3);
    auto in = input_of<float>(samples);
    auto shifted = in;
    for (auto& row : shifted.day_of_year)
      for (auto& d : row) d += 37;
    nn::NoGradGuard g;
    const Model<float> rel(config(Fusion::feature, 3), 8);
    CHECK(same_values(rel.forward(in)->value, rel.forward(shifted)->value));
    ModelConfig abs_cfg = config(Fusion::feature, 3);
    abs_cfg.pe_mode = PositionalMode::absolute_day_of_year;
    const Model<float> absolute(abs_cfg, 8);
    CHECK(max_abs_diff(absolute.forward(in)->value, absolute.forward(shifted)->value) > 1e-6);
  }

  TEST_CASE("zero parameters give a constant map") {
    const auto in = input_of<float>(samples_for(1));
    Model<float> m(config(Fusion::none, 1), 9);
    for (auto& [name, p] : m.parameters()) p->value.fill(0.0f);
    m.parameter("decoder.head.bias")->value.fill(0.75f);
    nn::NoGradGuard g;
    const auto logits = m.forward(in);
    for (float v : logits->value.values()) CHECK(v == 0.75f);
  }

  TEST_CASE("configuration errors") {
    ModelConfig c = config(Fusion::feature, 3);
    c.attention_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config(Fusion::none, 3);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    const Model<float> m(config(Fusion::feature, 3), 1);
    const auto in = input_of<float>(samples_for(2));
    try {
      m.forward(in);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "T");
    }
    auto bad = nlohmann::json{{"fusion", "late"}};
    try {
      model_config_from_json(bad, "model");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "model.fusion");
    }
    CHECK(model_config_from_json(to_json(config(Fusion::feature, 5))) == config(Fusion::feature, 5));
  }

  TEST_CASE("checkpoints") {
    TempDir dir("ckpt");
    const auto in = input_of<float>(samples_for(3));
    const Model<float> m(config(Fusion::feature, 3), 10);
    save_checkpoint(m, dir / "m.wfck");
    const auto back = load_checkpoint(dir / "m.wfck");
    CHECK(back.config() == m.config());
    {
      nn::NoGradGuard g;
      CHECK(same_values(m.forward(in)->value, back.forward(in)->value));
    }

    SUBCASE("encoder-only partial load") {
      Model<float> enc_only(config(Fusion::none, 1), 11);
      save_checkpoint(enc_only, dir / "full.wfck");
      Model<float> target(config(Fusion::feature, 3), 12);
      const auto before = snapshot(target);
      // the stem shapes agree; decoder shapes agree too, so drop them from the source
      const auto report = load_parameters(target, dir / "full.wfck");
      CHECK(report.missing_from_checkpoint == std::vector<std::string>{"ltae.key.weight", "ltae.query"});
      CHECK(report.unmatched_in_checkpoint.empty());
      for (const auto& name : report.matched) {
        CHECK(same_values(target.parameter(name)->value, enc_only.parameter(name)->value));
      }
      for (const auto& [name, t] : before) {
        if (name.rfind("ltae.", 0) == 0) CHECK(same_values(target.parameter(name)->value, t));
      }
    }
    SUBCASE("shape mismatch names the parameter") {
      Model<float> wide(config(Fusion::data, 2), 13);
      save_checkpoint(wide, dir / "wide.wfck");
      Model<float> target(config(Fusion::none, 1), 14);
      try {
        load_parameters(target, dir / "wide.wfck");
        FAIL("expected CheckpointError");
      } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("encoder.stem.weight") != std::string::npos);
      }
    }
    SUBCASE("corrupt file") {
      std::ofstream(dir / "junk.wfck") << "WFCKPT00garbage";
      CHECK_THROWS_AS(load_checkpoint(dir / "junk.wfck"), CheckpointError);
    }
  }

  TEST_CASE("end-to-end gradients in double precision") {
    for (auto [fusion, window] : {std::pair{Fusion::data, 3}, {Fusion::feature, 3}}) {
      for (auto family : {EncoderFamily::residual_conv, EncoderFamily::windowed_attention}) {
        CAPTURE(to_string(fusion));
        CAPTURE(to_string(family));
        const auto cfg = tiny(fusion, window, family);
        Model<double> m(cfg, 15);
        const auto in = input_of<double>(samples_for(window, 16, 2));
        Probe probe(16);
        std::vector<VarD> params;
        for (const auto& [name, p] : m.parameters()) params.push_back(p);
        const auto r = gradcheck(params, [&] { return probe(m.forward(in)); }, 2, 17, 1e-6);
        CHECK(r.probes >= 20);
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }

  TEST_CASE("float to double cast keeps values") {
    const Model<float> m(config(Fusion::feature, 2), 18);
    const auto d = m.cast<double>();
    for (const auto& [name, p] : m.parameters()) {
      const auto& q = d.parameter(name)->value;
      for (std::size_t i = 0; i < q.size(); ++i) CHECK(q[i] == static_cast<double>(p->value[i]));
    }
  }
}
