#include "csmae/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "csmae/errors.hpp"

namespace csmae {

void Checkpoint::put(const std::string& name, const Tensor& tensor) {
  put(name, tensor.shape(), std::vector<Real>(tensor.data().begin(), tensor.data().end()));
}

void Checkpoint::put(const std::string& name, Shape shape, const std::vector<Real>& values) {
  if (name.size() > 0xFFFF) throw ContractError("checkpoint entry name too long");
  if (shape.size() > 0xFF) throw ContractError("checkpoint entry has too many dims");
  Tensor t(std::move(shape), values);
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second].second = t;
    return;
  }
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("checkpoint has no entry '" + name + "'");
  return entries_[it->second].second;
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  std::vector<Real> bytes;
  bytes.reserve(text.size() + 1);
  for (unsigned char c : text) bytes.push_back(static_cast<Real>(c));
  if (bytes.empty()) bytes.push_back(0);  // dims must be positive; a lone NUL marks empty text
  put(name, {bytes.size()}, bytes);
}

std::string Checkpoint::get_text(const std::string& name) const {
  std::string text;
  for (Real v : get(name).data()) {
    if (v < 0 || v > 255) throw FormatError("checkpoint text entry '" + name + "' holds non-byte values");
    if (v != 0) text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return text;
}

void Checkpoint::put_params(const std::string& prefix, const ParamSet& params) {
  for (const auto& p : params) put(prefix + p.name, p.tensor);
}

void Checkpoint::load_params(const std::string& prefix, ParamSet& params) const {
  for (auto& p : params) {
    const Tensor& stored = get(prefix + p.name);
    if (stored.shape() != p.tensor.shape()) {
      throw FormatError("checkpoint entry '" + prefix + p.name + "' has shape " + shape_str(stored.shape()) +
                        ", model expects " + shape_str(p.tensor.shape()));
    }
    std::copy(stored.data().begin(), stored.data().end(), p.tensor.data().begin());
  }
}

void Checkpoint::put_optimizer(const std::string& prefix, const ParamSet& params, const OptimizerState& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    put(prefix + "m/" + params[i].name, params[i].tensor.shape(), state.first_moment[i]);
    put(prefix + "v/" + params[i].name, params[i].tensor.shape(), state.second_moment[i]);
  }
  put(prefix + "step", {1}, {static_cast<Real>(state.step)});
}

void Checkpoint::load_optimizer(const std::string& prefix, const ParamSet& params, OptimizerState& state) const {
  state.first_moment.resize(params.size());
  state.second_moment.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& m = get(prefix + "m/" + params[i].name);
    const Tensor& v = get(prefix + "v/" + params[i].name);
    if (m.numel() != params[i].tensor.numel() || v.numel() != params[i].tensor.numel()) {
      throw FormatError("optimizer moments for '" + params[i].name + "' have the wrong size");
    }
    state.first_moment[i].assign(m.data().begin(), m.data().end());
    state.second_moment[i].assign(v.data().begin(), v.data().end());
  }
  state.step = static_cast<std::uint64_t>(get(prefix + "step").item());
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write("CSMA", 4);
    binary::write_le<std::uint32_t>(out, 1);
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, tensor] : entries_) {
      binary::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      binary::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.ndim()));
      for (std::size_t d : tensor.shape()) binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
      for (Real v : tensor.data()) binary::write_le<float>(out, static_cast<float>(v));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  binary::expect_magic(in, "CSMA", path.string());
  const auto version = binary::read_le<std::uint32_t>(in, "checkpoint version");
  if (version != 1) throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = binary::read_le<std::uint32_t>(in, "checkpoint entry count");
  Checkpoint ck;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = binary::read_le<std::uint16_t>(in, "entry name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError(path.string() + ": truncated entry name");
    const auto ndim = binary::read_le<std::uint8_t>(in, "entry rank");
    Shape shape(ndim);
    for (auto& d : shape) {
      d = binary::read_le<std::uint32_t>(in, "entry dims");
      if (d == 0) throw FormatError(path.string() + ": zero dim in entry '" + name + "'");
    }
    std::vector<Real> values(shape_numel(shape));
    for (Real& v : values) v = static_cast<Real>(binary::read_le<float>(in, "entry data"));
    ck.put(name, std::move(shape), values);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after last entry");
  return ck;
}

}  // namespace csmae
