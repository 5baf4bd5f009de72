// Copyright 2026 The netdissect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "model/model_io.hpp"

#include <bit>
#include <cstring>

#include "common/error.hpp"
#include "common/files.hpp"
#include "json.hpp"

namespace nd {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void append_le(std::vector<std::uint8_t>& blob, const Tensor& t) {
  const std::size_t start = blob.size();
  blob.resize(start + t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(t[i]);
    for (int b = 0; b < 4; ++b) blob[start + i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
}

std::vector<float> read_le(std::span<const std::uint8_t> bytes) {
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

ojson layer_spec(const LayerDesc& layer) {
  ojson spec = ojson::object();
  switch (layer.kind) {
    case LayerKind::kConv:
      spec["kernel_h"] = layer.conv.kernel_h;
      spec["kernel_w"] = layer.conv.kernel_w;
      spec["stride"] = layer.conv.stride;
      spec["padding"] = layer.conv.padding;
      spec["in_channels"] = layer.conv.in_channels;
      spec["out_channels"] = layer.conv.out_channels;
      break;
    case LayerKind::kFc:
      spec["in_features"] = layer.fc_in;
      spec["out_features"] = layer.fc_out;
      break;
    case LayerKind::kBatchNorm: spec["eps"] = static_cast<double>(layer.bn_eps); break;
    default: break;
  }
  return spec;
}

// Field access with kParse diagnostics naming the location.
template <typename T>
T field(const ojson& obj, const char* key, const std::string& where) {
  require(obj.is_object(), ErrorCode::kParse, where + ": expected an object");
  auto it = obj.find(key);
  require(it != obj.end(), ErrorCode::kParse, where + ": missing field '" + key + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

std::size_t positive_field(const ojson& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  require(it != obj.end(), ErrorCode::kParse, where + ": missing field '" + key + "'");
  require(it->is_number_unsigned() || (it->is_number_integer() && it->get<long long>() >= 0), ErrorCode::kParse,
          where + ": field '" + key + "' must be a non-negative integer");
  return it->get<std::size_t>();
}

}  // namespace

SerializedModel save_model(const Model& model) {
  SerializedModel out;
  ojson manifest;
  manifest["format_version"] = kManifestFormatVersion;
  manifest["name"] = model.name();
  manifest["input_shape"] = model.input_shape();
  manifest["class_count"] = Model::kClassCount;
  ojson meta = ojson::object();
  for (const auto& [k, v] : model.metadata()) meta[k] = v;
  manifest["metadata"] = meta;

  ojson layers = ojson::array();
  for (const auto& layer : model.layers()) {
    ojson entry;
    entry["id"] = layer.id;
    entry["kind"] = layer_kind_name(layer.kind);
    entry["spec"] = layer_spec(layer);
    ojson weights = ojson::array();
    for (const auto& w : layer.weights) {
      ojson ref;
      ref["name"] = w.name;
      ref["role"] = w.role;
      ref["shape"] = w.value.shape();
      ref["offset"] = out.blob.size();
      weights.push_back(ref);
      append_le(out.blob, w.value);
    }
    entry["weights"] = weights;
    layers.push_back(entry);
  }
  manifest["layers"] = layers;
  out.manifest = manifest.dump(2) + "\n";
  return out;
}

Model load_model(std::string_view manifest_text, std::span<const std::uint8_t> blob) {
  ojson doc;
  try {
    doc = ojson::parse(manifest_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kParse, std::string("manifest is not valid structured text: ") + e.what());
  }
  const int version = field<int>(doc, "format_version", "manifest");
  require(version == kManifestFormatVersion, ErrorCode::kParse,
          "unsupported manifest format_version " + std::to_string(version));
  const auto name = doc.contains("name") ? field<std::string>(doc, "name", "manifest") : std::string("model");
  const auto input_shape = field<Shape>(doc, "input_shape", "manifest");
  if (doc.contains("class_count")) {
    require(field<std::size_t>(doc, "class_count", "manifest") == Model::kClassCount, ErrorCode::kShape,
            "manifest class_count must be 2");
  }
  std::map<std::string, std::string> metadata;
  if (doc.contains("metadata")) metadata = field<std::map<std::string, std::string>>(doc, "metadata", "manifest");

  require(doc.contains("layers"), ErrorCode::kParse, "manifest: missing field 'layers'");
  const auto& layer_docs = doc["layers"];
  require(layer_docs.is_array(), ErrorCode::kParse, "manifest: 'layers' must be a list");

  std::vector<LayerDesc> layers;
  std::size_t offset = 0;
  for (std::size_t li = 0; li < layer_docs.size(); ++li) {
    const auto& ld = layer_docs[li];
    const std::string where = "manifest layer " + std::to_string(li);
    LayerDesc layer;
    layer.id = field<std::string>(ld, "id", where);
    layer.kind = parse_layer_kind(field<std::string>(ld, "kind", where));
    const ojson spec = ld.contains("spec") ? ld.at("spec") : ojson::object();
    const std::string spec_where = where + " ('" + layer.id + "') spec";
    switch (layer.kind) {
      case LayerKind::kConv:
        layer.conv.kernel_h = positive_field(spec, "kernel_h", spec_where);
        layer.conv.kernel_w = positive_field(spec, "kernel_w", spec_where);
        layer.conv.stride = positive_field(spec, "stride", spec_where);
        layer.conv.padding = positive_field(spec, "padding", spec_where);
        layer.conv.in_channels = positive_field(spec, "in_channels", spec_where);
        layer.conv.out_channels = positive_field(spec, "out_channels", spec_where);
        break;
      case LayerKind::kFc:
        layer.fc_in = positive_field(spec, "in_features", spec_where);
        layer.fc_out = positive_field(spec, "out_features", spec_where);
        break;
      case LayerKind::kBatchNorm: layer.bn_eps = static_cast<float>(field<double>(spec, "eps", spec_where)); break;
      default: break;
    }

    const ojson weights = ld.contains("weights") ? ld.at("weights") : ojson::array();
    require(weights.is_array(), ErrorCode::kParse, where + ": 'weights' must be a list");
    for (std::size_t wi = 0; wi < weights.size(); ++wi) {
      const auto& wd = weights[wi];
      const std::string wwhere = where + " weight " + std::to_string(wi);
      WeightRef ref;
      ref.name = field<std::string>(wd, "name", wwhere);
      ref.role = field<std::string>(wd, "role", wwhere);
      const auto shape = field<Shape>(wd, "shape", wwhere);
      const auto declared = positive_field(wd, "offset", wwhere);
      require(declared == offset, ErrorCode::kParse,
              wwhere + " ('" + ref.name + "'): offset " + std::to_string(declared) + " != expected " +
                  std::to_string(offset) + " (tensors must be concatenated in manifest order)");
      require(!shape.empty(), ErrorCode::kShape, wwhere + " ('" + ref.name + "'): empty shape");
      for (auto d : shape) require(d >= 1, ErrorCode::kShape, wwhere + " ('" + ref.name + "'): zero dimension");
      const std::size_t bytes = shape_numel(shape) * 4;
      require(offset + bytes <= blob.size(), ErrorCode::kBlobTruncated,
              "weight blob truncated: tensor '" + ref.name + "' at byte offset " + std::to_string(offset) +
                  " needs " + std::to_string(bytes) + " bytes, blob has " + std::to_string(blob.size()) + " bytes");
      ref.value = Tensor::from_values(shape, read_le(blob.subspan(offset, bytes)));
      offset += bytes;
      layer.weights.push_back(std::move(ref));
    }
    layers.push_back(std::move(layer));
  }
  require(offset == blob.size(), ErrorCode::kBlobTrailing,
          "weight blob has " + std::to_string(blob.size() - offset) + " trailing bytes after byte offset " +
              std::to_string(offset));
  return Model(name, input_shape, std::move(layers), std::move(metadata));
}

void write_model_files(const Model& model, const fs::path& manifest_path, const fs::path& weights_path) {
  const auto serialized = save_model(model);
  write_file_bytes(weights_path, serialized.blob);
  write_file_text(manifest_path, serialized.manifest);
}

Model read_model_files(const fs::path& manifest_path, const fs::path& weights_path) {
  const auto manifest = read_file_text(manifest_path);
  const auto blob = read_file_bytes(weights_path);
  return load_model(manifest, blob);
}

ModelPaths model_paths(const fs::path& prefix_or_file) {
  fs::path stem = prefix_or_file;
  if (stem.extension() == ".netm" || stem.extension() == ".netw") stem.replace_extension();
  fs::path manifest = stem, weights = stem;
  manifest += ".netm";
  weights += ".netw";
  return {manifest, weights};
}

}  // namespace nd
