#include <cstring>

#include <zlib.h>

#include "binary_io.hpp"
#include "pulsesense/error.hpp"
#include "pulsesense/model.hpp"

namespace pulsesense {
namespace {

constexpr std::string_view kModelMagic = "PSNN1";

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string save_model(const ModelParams& params, const nlohmann::json& meta) {
  const nlohmann::json header = {{"model", to_json(params.config())}, {"meta", meta}};
  const std::string text = header.dump();

  std::string out(kModelMagic);
  out.reserve(out.size() + 12 + text.size() + 4 * params.size());
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (Eigen::Index i = 0; i < params.flat().size(); ++i) detail::put_f32(out, static_cast<float>(params.flat()[i]));
  detail::put_u32(out, crc32_of(out));
  return out;
}

LoadedModel load_model(std::string_view bytes) {
  if (bytes.size() < kModelMagic.size() || bytes.substr(0, kModelMagic.size()) != kModelMagic) {
    throw Error(ErrorCode::BadMagic, "not a PSNN1 model container");
  }
  if (bytes.size() < kModelMagic.size() + 12) throw Error(ErrorCode::ChecksumMismatch, "model file truncated");
  const std::size_t body = bytes.size() - 4;
  if (crc32_of(bytes.substr(0, body)) != detail::get_u32(bytes, body)) {
    throw Error(ErrorCode::ChecksumMismatch, "CRC-32 trailer does not match contents");
  }

  std::size_t off = kModelMagic.size();
  const std::uint32_t json_len = detail::get_u32(bytes, off);
  off += 4;
  if (off + json_len + 4 > body) throw Error(ErrorCode::ShapeMismatch, "config block overruns file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(off, json_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ShapeMismatch, std::string("unreadable config block: ") + e.what());
  }
  off += json_len;
  if (!header.is_object() || !header.contains("model")) throw Error(ErrorCode::ShapeMismatch, "config block lacks model");

  LoadedModel loaded{ModelParams(model_config_from_json(header.at("model"))), header.value("meta", nlohmann::json::object())};
  const std::uint32_t n = detail::get_u32(bytes, off);
  off += 4;
  if (n != loaded.params.size() || off + 4ull * n != body) {
    throw Error(ErrorCode::ShapeMismatch, "tensor payload does not match the stored config");
  }
  for (std::uint32_t i = 0; i < n; ++i, off += 4) loaded.params.flat()[i] = detail::get_f32(bytes, off);
  return loaded;
}

}  // namespace pulsesense
