#ifndef RAEC_CHECKPOINT_HPP_
#define RAEC_CHECKPOINT_HPP_

// Binary model checkpoints:
//   "RAEC" | u16 version | config | u32 tensor count | tensors...
//   config = u8 layers, u32 units, u8 direction, u8 pooling, u32 input dim
//   tensor = u16 name length, name bytes, u8 rank, u32 dims[rank], f64 values
// Feature normalisation statistics travel as the tensors "norm.mean" and "norm.scale".

#include <raec/model.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace raec {

inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline void write_tensor(std::ostream& os, const ParamTensor& t) {
  if (t.name.size() > 0xFFFF) throw ValidationError("parameter name too long: " + t.name);
  binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
  os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
  binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (double v : t.values) binio::write_le<double>(os, v);
}

inline ParamTensor read_tensor(std::istream& is) {
  ParamTensor t;
  const auto len = binio::read_le<std::uint16_t>(is, "tensor name length");
  t.name.resize(len);
  if (!is.read(t.name.data(), len)) throw ValidationError("truncated checkpoint: tensor name");
  const auto rank = binio::read_le<std::uint8_t>(is, "tensor rank");
  for (std::uint8_t i = 0; i < rank; ++i) t.shape.push_back(binio::read_le<std::uint32_t>(is, "tensor dims"));
  t.values.resize(ParamTensor::element_count(t.shape));
  for (auto& v : t.values) v = binio::read_le<double>(is, "tensor values");
  return t;
}

inline ParamTensor vector_tensor(std::string name, const Eigen::VectorXd& v) {
  ParamTensor t(std::move(name), {static_cast<std::size_t>(v.size())});
  t.vector() = v;
  return t;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Model& model) {
  os.write("RAEC", 4);
  binio::write_le<std::uint16_t>(os, kCheckpointVersion);
  const auto& c = model.config;
  binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(c.n_layers));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.units));
  binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(c.direction));
  binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(c.pooling));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.input_dim));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.params.size() + 2));
  for (const auto& t : model.params) detail::write_tensor(os, t);
  detail::write_tensor(os, detail::vector_tensor("norm.mean", model.norm.mean));
  detail::write_tensor(os, detail::vector_tensor("norm.scale", model.norm.scale));
}

inline Model read_checkpoint(std::istream& is) {
  binio::expect_magic(is, "RAEC", "checkpoint");
  const auto version = binio::read_le<std::uint16_t>(is, "checkpoint version");
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  Model m;
  m.config.n_layers = binio::read_le<std::uint8_t>(is, "config");
  m.config.units = static_cast<int>(binio::read_le<std::uint32_t>(is, "config"));
  const auto dir = binio::read_le<std::uint8_t>(is, "config");
  const auto pool = binio::read_le<std::uint8_t>(is, "config");
  if (dir > 1 || pool >= kAllPoolingKinds.size()) throw ValidationError("corrupt checkpoint config");
  m.config.direction = static_cast<Direction>(dir);
  m.config.pooling = static_cast<PoolingKind>(pool);
  m.config.input_dim = static_cast<int>(binio::read_le<std::uint32_t>(is, "config"));
  m.config.validate();
  const auto count = binio::read_le<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto t = detail::read_tensor(is);
    if (t.name == "norm.mean") {
      m.norm.mean = t.vector();
    } else if (t.name == "norm.scale") {
      m.norm.scale = t.vector();
    } else {
      m.params.add(std::move(t));
    }
  }
  // Shape check against a freshly built model of the same config.
  const Model reference = Model::initialize(m.config, 0);
  if (reference.params.size() != m.params.size()) throw ValidationError("checkpoint parameter set does not match its config");
  for (const auto& t : reference.params) {
    const auto* got = m.params.find(t.name);
    if (got == nullptr || got->shape != t.shape) throw ValidationError("checkpoint tensor " + t.name + " missing or misshapen");
  }
  if (m.norm.mean.size() != m.config.input_dim || m.norm.scale.size() != m.config.input_dim)
    throw ValidationError("checkpoint normalisation statistics missing or misshapen");
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint " + path.string());
  write_checkpoint(os, model);
  if (!os) throw Error("failed writing checkpoint " + path.string());
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

inline std::string checkpoint_bytes(const Model& model) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, model);
  return os.str();
}

}  // namespace raec

#endif  // RAEC_CHECKPOINT_HPP_
