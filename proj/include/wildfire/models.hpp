#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wildfire/data.hpp"
#include "wildfire/nn/graph.hpp"

namespace wildfire {

enum class EncoderFamily { residual_conv, windowed_attention };
enum class Fusion { none, data, feature };
enum class PositionalMode { absolute_day_of_year, relative_window };

std::string_view to_string(EncoderFamily v);
std::string_view to_string(Fusion v);
std::string_view to_string(PositionalMode v);

struct ModelConfig {
  EncoderFamily encoder_family = EncoderFamily::residual_conv;
  std::array<int, 4> encoder_widths{8, 16, 32, 64};
  Fusion fusion = Fusion::none;
  int window = 1;       // T, input days
  int in_channels = 7;  // channels per day
  PositionalMode pe_mode = PositionalMode::relative_window;
  int attention_heads = 4;
  std::array<int, 3> decoder_widths{32, 16, 8};  // strides 4, 2, 1
  int attention_window = 4;  // windowed_attention tile size
  std::optional<std::string> checkpoint_path;

  // Throws ConfigError naming the field.
  void validate() const;
  int encoder_input_channels() const { return fusion == Fusion::data ? in_channels * window : in_channels; }

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc, const std::string& path = {});

// pe[2k] = sin(t / 10000^(2k/d)), pe[2k+1] = cos(t / 10000^(2k/d)).
std::vector<double> positional_encoding(double t_bar, int d);

// Closed-form parameter count of a configuration.
std::size_t expected_parameter_count(const ModelConfig& config);

/// Network input: T day tensors [N,C,H,W] (oldest first) and per-sample
/// day-of-year values.
template <typename S>
struct ModelInput {
  std::vector<nn::Tensor<S>> days;
  std::vector<std::vector<int>> day_of_year;  // N x T

  int batch() const { return days.empty() ? 0 : days.front().dim(0); }
};

template <typename S>
ModelInput<S> make_input(std::span<const WindowSample* const> samples);

// Data-level fusion: [N, T*C, H, W] with day j's channel k at j*C + k.
template <typename S>
nn::Tensor<S> pack_data_fusion(const ModelInput<S>& input);

template <typename S>
struct EncoderFeatures {
  std::array<nn::Var<S>, 4> scales;  // strides 1, 2, 4, 8
};

template <typename S>
struct LtaeOutput {
  EncoderFeatures<S> fused;
  nn::Var<S> mask;  // [T, N, heads, H/8, W/8]
};

/// Segmentation network with optional data- or feature-level temporal
/// fusion. Parameters are named hierarchically (e.g. "encoder.stem.weight").
template <typename S>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Logits [N, 1, H, W].
  nn::Var<S> forward(const ModelInput<S>& input, LtaeOutput<S>* ltae = nullptr) const;

  EncoderFeatures<S> encode(const nn::Var<S>& x) const;
  LtaeOutput<S> ltae_fuse(const std::vector<EncoderFeatures<S>>& days,
                          const std::vector<std::vector<int>>& day_of_year) const;
  nn::Var<S> decode(const EncoderFeatures<S>& features) const;

  // Deepest encoder features (fused across time for feature fusion),
  // globally average pooled: [N, D4].
  nn::Tensor<S> embed(const ModelInput<S>& input) const;

  const std::vector<std::pair<std::string, nn::Var<S>>>& parameters() const { return params_; }
  nn::Var<S> parameter(std::string_view name) const;
  bool has_parameter(std::string_view name) const;
  std::size_t parameter_count() const;

  void zero_grad();

  // Copies parameter values into a model of another scalar type.
  template <typename U>
  Model<U> cast() const;

 private:
  nn::Var<S> add_param(const std::string& name, std::vector<int> shape, double stddev);
  nn::Var<S> conv(const std::string& name, const nn::Var<S>& x, int stride, int padding) const;
  nn::Var<S> attention_block(const std::string& prefix, const nn::Var<S>& x) const;
  EncoderFeatures<S> encode_days(const ModelInput<S>& input, std::vector<EncoderFeatures<S>>* per_day) const;

  ModelConfig config_;
  std::vector<std::pair<std::string, nn::Var<S>>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t init_seed_ = 0;

  template <typename U>
  friend class Model;
};

/// Result of loading a checkpoint into an existing model.
struct LoadReport {
  std::vector<std::string> matched;
  std::vector<std::string> unmatched_in_checkpoint;
  std::vector<std::string> missing_from_checkpoint;
};

// Binary checkpoint: "WFCKPT01", little-endian u64 header length, a JSON
// header {format_version, dtype, config, tensors:[{name, shape, offset}]},
// then the float32 little-endian payload.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

// Copies every parameter whose name appears in the checkpoint. Throws
// CheckpointError listing names whose shapes differ.
LoadReport load_parameters(Model<float>& model, const std::filesystem::path& path);

// Named float32 parameter tensors (used for in-memory snapshots).
using ParameterSnapshot = std::vector<std::pair<std::string, nn::Tensor<float>>>;
ParameterSnapshot snapshot(const Model<float>& model);
void restore(Model<float>& model, const ParameterSnapshot& snap);

}  // namespace wildfire
