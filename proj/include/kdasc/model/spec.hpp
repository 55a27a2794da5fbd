#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace kdasc {

enum class LayerKind { Conv2D, BatchNorm, ReLU, AvgPool, GlobalAvgPool, Dropout, Dense, Softmax, Residual };

std::string_view to_string(LayerKind k);
std::optional<LayerKind> parse_layer_kind(std::string_view s);

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t units = 0;  // out channels (conv, residual) or out features (dense)
  std::size_t pool_h = 1;
  std::size_t pool_w = 1;
  double dropout_rate = 0.0;

  static LayerSpec conv(std::size_t out_channels, std::size_t kh, std::size_t kw);
  static LayerSpec batchnorm();
  static LayerSpec relu();
  static LayerSpec avgpool(std::size_t ph, std::size_t pw);
  static LayerSpec global_avgpool();
  static LayerSpec dropout(double rate);
  static LayerSpec dense(std::size_t out_features);
  static LayerSpec softmax();
  // Teacher residual stage: two k x k convs, see nn::ResidualBlock.
  static LayerSpec residual(std::size_t out_channels, std::size_t kernel);

  bool operator==(const LayerSpec&) const = default;
};

// Per-sample activation shape: {H, W, C} or {D}.
using ActShape = std::vector<std::size_t>;

struct ModelSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  std::array<std::size_t, 3> input_shape{128, 128, 3};
  // Index of the FC(64) layer; the embedding is read after the ReLU that follows it.
  std::size_t embedding_layer_index = 0;

  bool operator==(const ModelSpec&) const = default;

  std::size_t embedding_tap_index() const { return embedding_layer_index + 1; }
};

inline constexpr std::size_t kEmbeddingDim = 64;

// Stable per-layer names, e.g. "03_avgpool".
std::string layer_name(const ModelSpec& spec, std::size_t index);

// Output shape of every layer. Throws ShapeError if consecutive layers do not compose.
std::vector<ActShape> infer_shapes(const ModelSpec& spec);
ActShape input_act_shape(const ModelSpec& spec);

// Full structural validation: shapes compose, the embedding layer is a
// 64-unit dense layer followed by ReLU, and the model ends in a softmax.
void validate(const ModelSpec& spec);

struct ParameterEntry {
  std::string name;
  std::size_t elements = 0;
  bool trainable = true;
};

// Names and sizes of every stored tensor (trainable parameters first within
// each layer, then running statistics), in network order.
std::vector<ParameterEntry> parameter_layout(const ModelSpec& spec);

// Six-row student: three Conv2x2@16 stages and a Conv2x2@32 stage (each
// Conv - ReLU - BN - pool - dropout 10/15/20/25%), FC64 - ReLU - dropout 30%,
// FC10 - softmax.
ModelSpec build_student();

struct TeacherConfig {
  std::vector<std::size_t> channels{32, 64, 128, 256};
  std::size_t kernel = 3;
  double dense_dropout = 0.3;
};

// K residual stages (each followed by 2x2 average pooling), global average
// pooling, then the FC(64) - ReLU - dropout - FC(10) - softmax dense block.
ModelSpec build_teacher(const TeacherConfig& config = {});

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

}  // namespace kdasc
