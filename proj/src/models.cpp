#include "wildfire/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "wildfire/errors.hpp"
#include "wildfire/json_util.hpp"
#include "wildfire/nn/ops.hpp"
#include "wildfire/rng.hpp"

namespace wildfire {

using nlohmann::json;
using nn::Tensor;
using nn::Var;

std::string_view to_string(EncoderFamily v) {
  return v == EncoderFamily::residual_conv ? "residual_conv" : "windowed_attention";
}
std::string_view to_string(Fusion v) {
  switch (v) {
    case Fusion::none: return "none";
    case Fusion::data: return "data";
    case Fusion::feature: return "feature";
  }
  return "none";
}
std::string_view to_string(PositionalMode v) {
  return v == PositionalMode::absolute_day_of_year ? "absolute_day_of_year" : "relative_window";
}

namespace {

template <typename E>
E parse_enum(std::string_view text, std::initializer_list<E> options, const std::string& field) {
  for (E e : options) {
    if (to_string(e) == text) return e;
  }
  throw ConfigError("field '" + field + "' has unknown value '" + std::string(text) + "'", field);
}

}  // namespace

void ModelConfig::validate() const {
  for (int w : encoder_widths) {
    if (w <= 0) throw ConfigError("encoder widths must be positive", "encoder_widths");
  }
  for (int w : decoder_widths) {
    if (w <= 0) throw ConfigError("decoder widths must be positive", "decoder_widths");
  }
  if (window < 1) throw ConfigError("T must be >= 1", "T");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1", "in_channels");
  if (fusion == Fusion::none && window != 1) throw ConfigError("fusion 'none' requires T = 1", "fusion");
  if (attention_window < 1) throw ConfigError("attention_window must be >= 1", "attention_window");
  if (fusion == Fusion::feature) {
    if (attention_heads < 1) throw ConfigError("attention_heads must be >= 1", "attention_heads");
    for (int w : encoder_widths) {
      if (w % attention_heads != 0) {
        throw ConfigError("attention_heads must divide every encoder width", "attention_heads");
      }
    }
    if (encoder_widths[3] % 2 != 0) throw ConfigError("deepest width must be even for the positional encoding", "encoder_widths");
  }
}

json to_json(const ModelConfig& c) {
  json doc = {{"encoder_family", std::string(to_string(c.encoder_family))},
              {"encoder_widths", c.encoder_widths},
              {"fusion", std::string(to_string(c.fusion))},
              {"T", c.window},
              {"in_channels", c.in_channels},
              {"pe_mode", std::string(to_string(c.pe_mode))},
              {"attention_heads", c.attention_heads},
              {"decoder_widths", c.decoder_widths},
              {"attention_window", c.attention_window},
              {"checkpoint_path", c.checkpoint_path ? json(*c.checkpoint_path) : json(nullptr)}};
  return doc;
}

ModelConfig model_config_from_json(const json& doc, const std::string& path) {
  ObjectReader r(doc, path);
  ModelConfig c;
  c.encoder_family = parse_enum(r.optional<std::string>("encoder_family", "residual_conv"),
                                {EncoderFamily::residual_conv, EncoderFamily::windowed_attention}, r.field("encoder_family"));
  const auto widths = r.optional<std::vector<int>>("encoder_widths", {8, 16, 32, 64});
  if (widths.size() != 4) throw ConfigError("encoder_widths must list 4 widths", r.field("encoder_widths"));
  std::copy(widths.begin(), widths.end(), c.encoder_widths.begin());
  c.fusion = parse_enum(r.optional<std::string>("fusion", "none"), {Fusion::none, Fusion::data, Fusion::feature}, r.field("fusion"));
  c.window = r.optional<int>("T", 1);
  c.in_channels = r.optional<int>("in_channels", 7);
  c.pe_mode = parse_enum(r.optional<std::string>("pe_mode", "relative_window"),
                         {PositionalMode::absolute_day_of_year, PositionalMode::relative_window}, r.field("pe_mode"));
  c.attention_heads = r.optional<int>("attention_heads", 4);
  const auto dec = r.optional<std::vector<int>>("decoder_widths", {32, 16, 8});
  if (dec.size() != 3) throw ConfigError("decoder_widths must list 3 widths", r.field("decoder_widths"));
  std::copy(dec.begin(), dec.end(), c.decoder_widths.begin());
  c.attention_window = r.optional<int>("attention_window", 4);
  if (r.has("checkpoint_path") && !doc.at("checkpoint_path").is_null()) {
    c.checkpoint_path = r.required<std::string>("checkpoint_path");
  }
  r.optional<std::string>("checkpoint_path", "");
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), r.field(e.field()));
  }
  return c;
}

std::vector<double> positional_encoding(double t_bar, int d) {
  if (d <= 0 || d % 2 != 0) throw ConfigError("positional encoding width must be even", "d_pe");
  if (t_bar < 0.0) throw ConfigError("positional index must be >= 0", "t_bar");
  std::vector<double> pe(static_cast<std::size_t>(d));
  for (int k = 0; k < d / 2; ++k) {
    const double angle = t_bar / std::pow(10000.0, 2.0 * k / d);
    pe[2 * k] = std::sin(angle);
    pe[2 * k + 1] = std::cos(angle);
  }
  return pe;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; };
  const auto& w = c.encoder_widths;
  std::size_t n = conv(c.encoder_input_channels(), w[0], 3);
  for (int s = 1; s < 4; ++s) {
    if (c.encoder_family == EncoderFamily::residual_conv) {
      n += conv(w[s - 1], w[s], 3) + 2 * conv(w[s], w[s], 3);
    } else {
      n += conv(w[s - 1], w[s], 2) + 4 * conv(w[s], w[s], 1) - w[s] + conv(w[s], 2 * w[s], 1) +
           conv(2 * w[s], w[s], 1);
    }
  }
  const auto& d = c.decoder_widths;
  n += conv(w[3] + w[2], d[0], 3) + conv(d[0] + w[1], d[1], 3) + conv(d[1] + w[0], d[2], 3) + conv(d[2], 1, 1);
  if (c.fusion == Fusion::feature) {
    const std::size_t e = w[3];
    n += e * e + e;  // bias-free key projection + master queries
  }
  return n;
}

template <typename S>
ModelInput<S> make_input(std::span<const WindowSample* const> samples) {
  ModelInput<S> in;
  if (samples.empty()) return in;
  const auto& f = *samples.front();
  const int n = static_cast<int>(samples.size());
  const std::size_t plane = f.plane_size();
  const std::size_t day_size = static_cast<std::size_t>(f.channels) * plane;
  for (int t = 0; t < f.window; ++t) {
    Tensor<S> day({n, f.channels, f.height, f.width});
    for (int b = 0; b < n; ++b) {
      const auto& s = *samples[b];
      if (s.window != f.window || s.channels != f.channels || s.height != f.height || s.width != f.width) {
        throw ShapeError("samples in a batch must share T, C, H and W");
      }
      const float* src = s.inputs.data() + t * day_size;
      std::copy(src, src + day_size, day.data() + b * day_size);
    }
    in.days.push_back(std::move(day));
  }
  for (const auto* s : samples) in.day_of_year.push_back(s->day_of_year);
  return in;
}

template <typename S>
Tensor<S> pack_data_fusion(const ModelInput<S>& input) {
  if (input.days.size() == 1) return input.days.front();
  const auto& s = input.days.front().shape();
  const int n = s[0], c = s[1], t_count = static_cast<int>(input.days.size());
  const std::size_t day = static_cast<std::size_t>(c) * s[2] * s[3];
  Tensor<S> out({n, c * t_count, s[2], s[3]});
  for (int b = 0; b < n; ++b) {
    for (int t = 0; t < t_count; ++t) {
      const S* src = input.days[t].data() + b * day;
      std::copy(src, src + day, out.data() + (static_cast<std::size_t>(b) * t_count + t) * day);
    }
  }
  return out;
}

template <typename S>
Var<S> Model<S>::add_param(const std::string& name, std::vector<int> shape, double stddev) {
  Rng rng(derive_seed(init_seed_, std::hash<std::string>{}(name) & 0xffffffffULL, params_.size()));
  Tensor<S> t(std::move(shape));
  if (stddev > 0.0) {
    for (auto& v : t.values()) v = static_cast<S>(rng.normal(0.0, stddev));
  }
  auto var = nn::parameter(std::move(t));
  index_[name] = params_.size();
  params_.emplace_back(name, var);
  return var;
}

template <typename S>
Model<S>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config), init_seed_(seed) {
  config_.validate();
  auto conv_params = [&](const std::string& name, int in, int out, int k) {
    add_param(name + ".weight", {out, in, k, k}, std::sqrt(2.0 / (in * k * k)));
    add_param(name + ".bias", {out}, 0.0);
  };
  const auto& w = config_.encoder_widths;
  conv_params("encoder.stem", config_.encoder_input_channels(), w[0], 3);
  for (int s = 1; s < 4; ++s) {
    const std::string stage = "encoder.stage" + std::to_string(s + 1);
    if (config_.encoder_family == EncoderFamily::residual_conv) {
      conv_params(stage + ".down", w[s - 1], w[s], 3);
      conv_params(stage + ".block.conv1", w[s], w[s], 3);
      conv_params(stage + ".block.conv2", w[s], w[s], 3);
    } else {
      conv_params(stage + ".down", w[s - 1], w[s], 2);
      for (const char* p : {".attn.q", ".attn.v", ".attn.proj"}) conv_params(stage + p, w[s], w[s], 1);
      // keys carry no bias; it would shift all scores of a query equally
      add_param(stage + ".attn.k.weight", {w[s], w[s], 1, 1}, std::sqrt(2.0 / w[s]));
      conv_params(stage + ".mlp.fc1", w[s], 2 * w[s], 1);
      conv_params(stage + ".mlp.fc2", 2 * w[s], w[s], 1);
    }
  }
  if (config_.fusion == Fusion::feature) {
    const int e = w[3];
    const int dk = e / config_.attention_heads;
    // no key bias: a per-channel shift moves every day's score equally and
    // cancels in the softmax over time
    add_param("ltae.key.weight", {e, e, 1, 1}, std::sqrt(2.0 / e));
    add_param("ltae.query", {config_.attention_heads, dk}, std::sqrt(2.0 / dk));
  }
  const auto& d = config_.decoder_widths;
  conv_params("decoder.up3", w[3] + w[2], d[0], 3);
  conv_params("decoder.up2", d[0] + w[1], d[1], 3);
  conv_params("decoder.up1", d[1] + w[0], d[2], 3);
  conv_params("decoder.head", d[2], 1, 1);
}

template <typename S>
Var<S> Model<S>::parameter(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second].second;
}

template <typename S>
bool Model<S>::has_parameter(std::string_view name) const {
  return index_.find(name) != index_.end();
}

template <typename S>
std::size_t Model<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p->value.size();
  return n;
}

template <typename S>
void Model<S>::zero_grad() {
  for (auto& [name, p] : params_) p->grad = Tensor<S>();
}

template <typename S>
Var<S> Model<S>::conv(const std::string& name, const Var<S>& x, int stride, int padding) const {
  return nn::conv2d(x, parameter(name + ".weight"), parameter(name + ".bias"), stride, padding);
}

template <typename S>
Var<S> Model<S>::attention_block(const std::string& prefix, const Var<S>& x) const {
  const int h = x->value.dim(2), w = x->value.dim(3);
  const int win = std::gcd(config_.attention_window, std::gcd(h, w));
  auto q = conv(prefix + ".attn.q", x, 1, 0);
  auto k = nn::conv2d(x, parameter(prefix + ".attn.k.weight"), Var<S>{}, 1, 0);
  auto v = conv(prefix + ".attn.v", x, 1, 0);
  auto y = nn::add(x, conv(prefix + ".attn.proj", nn::window_attention(q, k, v, win), 1, 0));
  auto hidden = nn::relu(conv(prefix + ".mlp.fc1", y, 1, 0));
  return nn::add(y, conv(prefix + ".mlp.fc2", hidden, 1, 0));
}

template <typename S>
EncoderFeatures<S> Model<S>::encode(const Var<S>& x) const {
  const auto& s = x->value.shape();
  if (s.size() != 4 || s[2] % 8 != 0 || s[3] % 8 != 0 || s[2] < 8 || s[3] < 8) {
    throw ShapeError("encoder input " + nn::shape_string(s) + " must have H, W divisible by 8");
  }
  if (s[1] != config_.encoder_input_channels()) {
    throw ConfigError("encoder expects " + std::to_string(config_.encoder_input_channels()) + " channels, got " +
                          std::to_string(s[1]),
                      "in_channels");
  }
  EncoderFeatures<S> f;
  f.scales[0] = nn::relu(conv("encoder.stem", x, 1, 1));
  for (int st = 1; st < 4; ++st) {
    const std::string stage = "encoder.stage" + std::to_string(st + 1);
    if (config_.encoder_family == EncoderFamily::residual_conv) {
      auto h = nn::relu(conv(stage + ".down", f.scales[st - 1], 2, 1));
      auto r = conv(stage + ".block.conv2", nn::relu(conv(stage + ".block.conv1", h, 1, 1)), 1, 1);
      f.scales[st] = nn::relu(nn::add(h, r));
    } else {
      auto h = conv(stage + ".down", f.scales[st - 1], 2, 0);
      f.scales[st] = attention_block(stage, h);
    }
  }
  return f;
}

template <typename S>
LtaeOutput<S> Model<S>::ltae_fuse(const std::vector<EncoderFeatures<S>>& days,
                                  const std::vector<std::vector<int>>& day_of_year) const {
  if (days.empty()) throw ConfigError("temporal fusion needs at least one day", "T");
  const int e = config_.encoder_widths[3];
  const int n = days.front().scales[3]->value.dim(0);
  if (static_cast<int>(day_of_year.size()) != n) throw ShapeError("day_of_year must list one entry per sample");
  const auto key_w = parameter("ltae.key.weight");
  const auto query = parameter("ltae.query");
  std::vector<Var<S>> scores;
  for (std::size_t t = 0; t < days.size(); ++t) {
    Tensor<S> pe({n, e});
    for (int b = 0; b < n; ++b) {
      if (day_of_year[b].size() != days.size()) throw ShapeError("day_of_year length differs from T");
      const double t_bar = config_.pe_mode == PositionalMode::relative_window ? static_cast<double>(t + 1)
                                                                               : static_cast<double>(day_of_year[b][t]);
      const auto enc = positional_encoding(t_bar, e);
      for (int c = 0; c < e; ++c) pe[static_cast<std::size_t>(b) * e + c] = static_cast<S>(enc[c]);
    }
    auto embedded = nn::add_channel_offsets(days[t].scales[3], pe);
    auto keys = nn::conv2d(embedded, key_w, Var<S>{}, 1, 0);
    scores.push_back(nn::head_scores(keys, query));
  }
  LtaeOutput<S> out;
  out.mask = nn::temporal_softmax(scores);
  for (int sc = 0; sc < 4; ++sc) {
    std::vector<Var<S>> seq;
    for (const auto& d : days) seq.push_back(d.scales[sc]);
    out.fused.scales[sc] = nn::temporal_pool(seq, out.mask);
  }
  return out;
}

template <typename S>
Var<S> Model<S>::decode(const EncoderFeatures<S>& f) const {
  auto x = f.scales[3];
  const char* names[] = {"decoder.up3", "decoder.up2", "decoder.up1"};
  for (int level = 2; level >= 0; --level) {
    x = nn::concat_channels(nn::upsample_nearest(x, 2), f.scales[level]);
    x = nn::relu(conv(names[2 - level], x, 1, 1));
  }
  return conv("decoder.head", x, 1, 0);
}

template <typename S>
EncoderFeatures<S> Model<S>::encode_days(const ModelInput<S>& input, std::vector<EncoderFeatures<S>>* per_day) const {
  if (static_cast<int>(input.days.size()) != config_.window) {
    throw ConfigError("model expects T = " + std::to_string(config_.window) + " input days, got " +
                          std::to_string(input.days.size()),
                      "T");
  }
  switch (config_.fusion) {
    case Fusion::none: return encode(nn::constant(input.days.front()));
    case Fusion::data: return encode(nn::constant(pack_data_fusion(input)));
    case Fusion::feature: break;
  }
  for (const auto& day : input.days) per_day->push_back(encode(nn::constant(day)));
  return {};
}

template <typename S>
Var<S> Model<S>::forward(const ModelInput<S>& input, LtaeOutput<S>* ltae) const {
  if (config_.fusion != Fusion::feature) {
    std::vector<EncoderFeatures<S>> unused;
    return decode(encode_days(input, &unused));
  }
  std::vector<EncoderFeatures<S>> days;
  encode_days(input, &days);
  auto fused = ltae_fuse(days, input.day_of_year);
  auto logits = decode(fused.fused);
  if (ltae) *ltae = std::move(fused);
  return logits;
}

template <typename S>
Tensor<S> Model<S>::embed(const ModelInput<S>& input) const {
  nn::NoGradGuard guard;
  if (config_.fusion != Fusion::feature) {
    std::vector<EncoderFeatures<S>> unused;
    return nn::global_avg_pool(encode_days(input, &unused).scales[3])->value;
  }
  std::vector<EncoderFeatures<S>> days;
  encode_days(input, &days);
  return nn::global_avg_pool(ltae_fuse(days, input.day_of_year).fused.scales[3])->value;
}

template <typename S>
template <typename U>
Model<U> Model<S>::cast() const {
  Model<U> out(config_, init_seed_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.params_[i].second->value = params_[i].second->value.template cast<U>();
  }
  return out;
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;
template ModelInput<float> make_input<float>(std::span<const WindowSample* const>);
template ModelInput<double> make_input<double>(std::span<const WindowSample* const>);
template Tensor<float> pack_data_fusion<float>(const ModelInput<float>&);
template Tensor<double> pack_data_fusion<double>(const ModelInput<double>&);

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kMagic[8] = {'W', 'F', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<char>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

struct CheckpointFile {
  json header;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError(path.string() + " is not a checkpoint");
  const std::uint64_t header_len = get_u64(in);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CheckpointFile file;
  try {
    file.header = json::parse(header);
    for (const auto& t : file.header.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<int>>();
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t count = Tensor<float>::count(shape);
      if (offset + 4 * count > payload.size()) throw CheckpointError("checkpoint payload truncated");
      std::vector<float> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = get_f32(payload.data() + offset + 4 * i);
      file.tensors.emplace_back(t.at("name").get<std::string>(), Tensor<float>(shape, std::move(values)));
    }
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint header malformed: " + std::string(e.what()));
  }
  return file;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  json tensors = json::array();
  std::vector<char> payload;
  for (const auto& [name, p] : model.parameters()) {
    tensors.push_back({{"name", name}, {"shape", p->value.shape()}, {"offset", payload.size()}});
    for (float v : p->value.values()) put_f32(payload, v);
  }
  const json header = {{"format_version", 1},
                       {"dtype", "float32"},
                       {"byte_order", "little"},
                       {"config", to_json(model.config())},
                       {"tensors", tensors}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(kMagic, 8);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  auto file = read_checkpoint_file(path);
  ModelConfig config;
  try {
    config = model_config_from_json(file.header.at("config"));
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint config malformed: " + std::string(e.what()));
  }
  Model<float> model(config, 0);
  const auto report = load_parameters(model, path);
  if (!report.missing_from_checkpoint.empty()) {
    throw CheckpointError("checkpoint lacks parameter '" + report.missing_from_checkpoint.front() + "'");
  }
  return model;
}

LoadReport load_parameters(Model<float>& model, const std::filesystem::path& path) {
  const auto file = read_checkpoint_file(path);
  LoadReport report;
  std::vector<std::string> mismatched;
  std::set<std::string> in_file;
  for (const auto& [name, tensor] : file.tensors) {
    in_file.insert(name);
    if (!model.has_parameter(name)) {
      report.unmatched_in_checkpoint.push_back(name);
      continue;
    }
    if (model.parameter(name)->value.shape() != tensor.shape()) {
      mismatched.push_back(name + " (checkpoint " + nn::shape_string(tensor.shape()) + ", model " +
                           nn::shape_string(model.parameter(name)->value.shape()) + ")");
    }
  }
  if (!mismatched.empty()) {
    std::string msg = "shape mismatch for";
    for (const auto& m : mismatched) msg += " " + m;
    throw CheckpointError(msg);
  }
  for (const auto& [name, tensor] : file.tensors) {
    if (!model.has_parameter(name)) continue;
    model.parameter(name)->value = tensor;
    report.matched.push_back(name);
  }
  for (const auto& [name, p] : model.parameters()) {
    if (!in_file.count(name)) report.missing_from_checkpoint.push_back(name);
  }
  return report;
}

ParameterSnapshot snapshot(const Model<float>& model) {
  ParameterSnapshot snap;
  for (const auto& [name, p] : model.parameters()) snap.emplace_back(name, p->value);
  return snap;
}

void restore(Model<float>& model, const ParameterSnapshot& snap) {
  for (const auto& [name, t] : snap) model.parameter(name)->value = t;
}

}  // namespace wildfire
