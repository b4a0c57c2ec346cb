#ifndef LINDEPS_IO_HPP
#define LINDEPS_IO_HPP

// LNDP (model) and LNDS (batch) container format:
//
//   bytes 0..3    magic, "LNDP" or "LNDS"
//   bytes 4..7    format version, u32 little-endian
//   bytes 8..15   header length in bytes, u64 little-endian
//   header        UTF-8 JSON
//   payload       raw little-endian f32 values
//
// Every blob in the header is {"shape": [...], "offset": o, "length": n}
// with offset and length in bytes relative to the payload start. The
// header's "payload_bytes" must equal the actual payload size.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <variant>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lindeps/errors.hpp"
#include "lindeps/model.hpp"
#include "lindeps/tensor.hpp"

namespace lindeps {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::string_view kModelMagic = "LNDP";
inline constexpr std::string_view kBatchMagic = "LNDS";

namespace detail {

using nlohmann::json;

template <typename U>
void put_le(std::vector<char>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename U>
U get_le(const char* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return value;
}

class PayloadWriter {
 public:
  json add(const Tensor32& t) {
    const std::size_t offset = bytes_.size();
    for (float v : t.data()) put_le(bytes_, std::bit_cast<std::uint32_t>(v));
    return json{{"shape", t.shape()}, {"offset", offset}, {"length", t.size() * sizeof(float)}};
  }

  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::span<const char> payload) : payload_(payload) {}

  Tensor32 read(const json& blob, const std::string& what) const {
    Shape shape;
    std::uint64_t offset = 0, length = 0;
    try {
      shape = blob.at("shape").get<Shape>();
      offset = blob.at("offset").get<std::uint64_t>();
      length = blob.at("length").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw FormatError(FormatFault::bad_header, what + ": malformed blob descriptor (" + e.what() + ")");
    }
    if (shape.empty() || shape_volume(shape) == 0) {
      throw FormatError(FormatFault::bad_header, what + ": blob shape must be non-empty and positive");
    }
    if (length != shape_volume(shape) * sizeof(float)) {
      throw FormatError(FormatFault::length_mismatch,
                        what + ": blob length " + std::to_string(length) + " bytes does not match shape " +
                            shape_string(shape));
    }
    if (offset > payload_.size() || length > payload_.size() - offset) {
      throw FormatError(FormatFault::truncated,
                        what + ": blob [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                            ") extends past end of payload (" + std::to_string(payload_.size()) + " bytes)");
    }
    std::vector<float> data(length / sizeof(float));
    const char* p = payload_.data() + offset;
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + i * sizeof(float)));
    }
    return Tensor32(std::move(shape), std::move(data));
  }

 private:
  std::span<const char> payload_;
};

inline std::vector<char> assemble(std::string_view magic, const json& header,
                                  const std::vector<char>& payload) {
  const std::string text = header.dump();
  std::vector<char> out(magic.begin(), magic.end());
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct Container {
  json header;
  std::span<const char> payload;
};

inline Container disassemble(std::string_view magic, std::span<const char> bytes) {
  if (bytes.size() < 4 || std::string_view(bytes.data(), 4) != magic) {
    throw FormatError(FormatFault::bad_magic, "expected magic \"" + std::string(magic) + "\"");
  }
  if (bytes.size() < 16) throw FormatError(FormatFault::truncated, "file shorter than fixed preamble");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kFormatVersion) {
    throw FormatError(FormatFault::unknown_version, "version " + std::to_string(version) +
                                                        " (supported: " + std::to_string(kFormatVersion) + ")");
  }
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - 16) {
    throw FormatError(FormatFault::truncated, "header of " + std::to_string(header_len) +
                                                  " bytes extends past end of file");
  }
  Container c;
  try {
    c.header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw FormatError(FormatFault::bad_header, std::string("header is not valid JSON: ") + e.what());
  }
  if (!c.header.is_object()) throw FormatError(FormatFault::bad_header, "header must be a JSON object");
  c.payload = bytes.subspan(16 + header_len);

  std::uint64_t declared = 0;
  try {
    declared = c.header.at("payload_bytes").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw FormatError(FormatFault::bad_header, "header lacks payload_bytes");
  }
  if (c.payload.size() < declared) {
    throw FormatError(FormatFault::truncated, "payload has " + std::to_string(c.payload.size()) +
                                                  " bytes, header declares " + std::to_string(declared));
  }
  if (c.payload.size() != declared) {
    throw FormatError(FormatFault::length_mismatch, "payload has " + std::to_string(c.payload.size()) +
                                                        " bytes, header declares " + std::to_string(declared));
  }
  return c;
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path.string());
}

inline const char* pool_kind_name(PoolKind k) { return k == PoolKind::max ? "max" : "avg"; }

inline json layer_to_json(const LayerSpec& layer, PayloadWriter& payload) {
  return std::visit(
      [&](const auto& l) -> json {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D>) {
          json j{{"type", "conv2d"}, {"stride", l.stride}, {"padding", l.padding}};
          j["blobs"]["weight"] = payload.add(l.weights);
          if (l.bias) j["blobs"]["bias"] = payload.add(*l.bias);
          return j;
        } else if constexpr (std::is_same_v<L, BatchNorm>) {
          // Stored as its bit pattern so the round trip is exact.
          json j{{"type", "batchnorm"}, {"epsilon_bits", std::bit_cast<std::uint32_t>(l.epsilon)},
                 {"epsilon", l.epsilon}};
          j["blobs"]["gamma"] = payload.add(l.gamma);
          j["blobs"]["beta"] = payload.add(l.beta);
          j["blobs"]["running_mean"] = payload.add(l.running_mean);
          j["blobs"]["running_var"] = payload.add(l.running_var);
          return j;
        } else if constexpr (std::is_same_v<L, Activation>) {
          return json{{"type", "activation"}, {"kind", "relu"}};
        } else if constexpr (std::is_same_v<L, Pool>) {
          return json{{"type", "pool"}, {"kind", pool_kind_name(l.kind)}, {"window", l.window}, {"stride", l.stride}};
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return json{{"type", "flatten"}};
        } else {
          json j{{"type", "dense"}};
          j["blobs"]["weight"] = payload.add(l.weights);
          if (l.bias) j["blobs"]["bias"] = payload.add(*l.bias);
          return j;
        }
      },
      layer);
}

inline LayerSpec layer_from_json(const json& j, const PayloadReader& payload, std::size_t index) {
  const std::string where = "layer " + std::to_string(index);
  const std::string type = j.at("type").get<std::string>();
  auto blob = [&](const char* name) { return payload.read(j.at("blobs").at(name), where + " " + name); };
  auto optional_blob = [&](const char* name) -> std::optional<Tensor32> {
    if (!j.contains("blobs") || !j["blobs"].contains(name)) return std::nullopt;
    return blob(name);
  };
  if (type == "conv2d") {
    return Conv2D{blob("weight"), optional_blob("bias"), j.at("stride").get<std::size_t>(),
                  j.at("padding").get<std::size_t>()};
  }
  if (type == "batchnorm") {
    BatchNorm bn{blob("gamma"), blob("beta"), blob("running_mean"), blob("running_var")};
    bn.epsilon = j.contains("epsilon_bits") ? std::bit_cast<float>(j["epsilon_bits"].get<std::uint32_t>())
                                            : j.at("epsilon").get<float>();
    return bn;
  }
  if (type == "activation") {
    const auto kind = j.value("kind", std::string("relu"));
    if (kind != "relu") throw FormatError(FormatFault::bad_header, where + ": unsupported activation " + kind);
    return Activation{};
  }
  if (type == "pool") {
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "max" && kind != "avg") throw FormatError(FormatFault::bad_header, where + ": unsupported pool " + kind);
    return Pool{kind == "max" ? PoolKind::max : PoolKind::avg, j.at("window").get<std::size_t>(),
                j.at("stride").get<std::size_t>()};
  }
  if (type == "flatten") return Flatten{};
  if (type == "dense") return Dense{blob("weight"), optional_blob("bias")};
  throw FormatError(FormatFault::bad_header, where + ": unknown layer type \"" + type + "\"");
}

}  // namespace detail

inline std::vector<char> encode_model(const Model& model) {
  detail::PayloadWriter payload;
  nlohmann::json header;
  header["format"] = std::string(kModelMagic);
  header["input_shape"] = model.input_shape;
  header["metadata"] = model.metadata;
  header["layers"] = nlohmann::json::array();
  for (const auto& layer : model.layers) header["layers"].push_back(detail::layer_to_json(layer, payload));
  header["payload_bytes"] = payload.bytes().size();
  return detail::assemble(kModelMagic, header, payload.bytes());
}

/// Parses an LNDP image and validates the shape chain.
inline Model decode_model(std::span<const char> bytes) {
  const auto container = detail::disassemble(kModelMagic, bytes);
  const detail::PayloadReader payload(container.payload);
  Model model;
  try {
    const auto& h = container.header;
    model.input_shape = h.at("input_shape").get<std::array<std::size_t, 3>>();
    if (h.contains("metadata")) model.metadata = h["metadata"].get<std::map<std::string, std::string>>();
    const auto& layers = h.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      model.layers.push_back(detail::layer_from_json(layers[i], payload, i));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatFault::bad_header, std::string("malformed model header: ") + e.what());
  }
  validate(model);
  return model;
}

inline void save_model(const Model& model, const std::filesystem::path& path) {
  validate(model);
  detail::write_file(path, encode_model(model));
}

inline Model load_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_model(bytes);
}

inline std::vector<char> encode_batch(const CalibrationBatch& batch) {
  detail::PayloadWriter payload;
  nlohmann::json header;
  header["format"] = std::string(kBatchMagic);
  header["images"] = payload.add(batch.images);
  if (batch.labels) header["labels"] = *batch.labels;
  if (batch.num_classes) header["num_classes"] = *batch.num_classes;
  header["payload_bytes"] = payload.bytes().size();
  return detail::assemble(kBatchMagic, header, payload.bytes());
}

inline CalibrationBatch decode_batch(std::span<const char> bytes) {
  const auto container = detail::disassemble(kBatchMagic, bytes);
  const detail::PayloadReader payload(container.payload);
  CalibrationBatch batch;
  try {
    const auto& h = container.header;
    batch.images = payload.read(h.at("images"), "images");
    if (h.contains("labels")) batch.labels = h["labels"].get<std::vector<std::uint32_t>>();
    if (h.contains("num_classes")) batch.num_classes = h["num_classes"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatFault::bad_header, std::string("malformed batch header: ") + e.what());
  }
  validate(batch);
  return batch;
}

inline void save_batch(const CalibrationBatch& batch, const std::filesystem::path& path) {
  validate(batch);
  detail::write_file(path, encode_batch(batch));
}

inline CalibrationBatch load_batch(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_batch(bytes);
}

}  // namespace lindeps

#endif  // LINDEPS_IO_HPP
