#include "ssmsec/serialize.hpp"

#include "ssmsec/grad.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ssmsec {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'S', 'M', 'S', 'E', 'C', 'M', '\0'};

template <typename T>
void write_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  in.read(bytes.data(), sizeof(T));
  require(static_cast<std::size_t>(in.gcount()) == sizeof(T), ErrorKind::Io, "truncated model file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

nlohmann::json header_of(const StackedModel& model) {
  nlohmann::json h;
  h["version"] = kModelFormatVersion;
  h["seed"] = model.seed;
  h["d_model"] = model.d_model;
  h["alphabet_size"] = model.alphabet_size;
  h["d_in"] = model.d_in;
  h["residual"] = model.residual;
  h["activation"] = to_string(model.activation);
  h["pooling"] = to_string(model.pooling);
  h["n_classes"] = model.n_classes();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers) {
    const int n = l.kind == LayerKind::Lti ? l.lti.n_state() : l.selective.n_state();
    layers.push_back({{"kind", to_string(l.kind)}, {"n_state", n}});
  }
  h["layers"] = layers;
  StackedModel copy = model;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& v : parameter_views(copy)) blocks.push_back({{"name", v.name}, {"size", v.size}});
  h["blocks"] = blocks;
  return h;
}

StackedModel skeleton_from(const nlohmann::json& h) {
  StackedModel m;
  m.seed = h.at("seed").get<std::uint64_t>();
  m.d_model = h.at("d_model").get<int>();
  m.alphabet_size = h.at("alphabet_size").get<int>();
  m.d_in = h.at("d_in").get<int>();
  m.residual = h.at("residual").get<bool>();
  m.activation = h.at("activation").get<std::string>() == "gelu" ? Activation::Gelu : Activation::Identity;
  m.pooling = h.at("pooling").get<std::string>() == "last" ? Pooling::Last : Pooling::Mean;
  const int dm = m.d_model;
  const int k = h.at("n_classes").get<int>();
  require(dm >= 1 && k >= 1, ErrorKind::Io, "bad model header sizes");
  if (m.alphabet_size > 0) {
    m.embedding = Mat::Zero(m.alphabet_size, dm);
  } else {
    m.encoder = Mat::Zero(dm, m.d_in);
    m.encoder_bias = Vec::Zero(dm);
  }
  for (const auto& lj : h.at("layers")) {
    ModelLayer l;
    const int n = lj.at("n_state").get<int>();
    if (lj.at("kind").get<std::string>() == "lti") {
      l.kind = LayerKind::Lti;
      l.lti.log_neg_a = Vec::Zero(n);
      l.lti.b = Mat::Zero(n, dm);
      l.lti.c = Mat::Zero(dm, n);
      l.lti.d = Mat::Zero(dm, dm);
    } else {
      l.kind = LayerKind::Selective;
      l.selective.a_log = Vec::Ones(n);
      l.selective.w_delta = Mat::Zero(n, dm);
      l.selective.b_delta = Vec::Zero(n);
      l.selective.w_b = Mat::Zero(n, dm);
      l.selective.c = Mat::Zero(dm, n);
      l.selective.d = Vec::Zero(dm);
    }
    m.layers.push_back(std::move(l));
  }
  m.readout = Mat::Zero(k, dm);
  m.readout_bias = Vec::Zero(k);
  return m;
}

}  // namespace

void save_model(const StackedModel& model, std::ostream& out) {
  model.validate();
  const std::string header = header_of(model).dump();
  out.write(kMagic.data(), kMagic.size());
  write_le<std::uint32_t>(out, kModelFormatVersion);
  write_le<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  StackedModel copy = model;
  for (const auto& v : parameter_views(copy))
    for (Eigen::Index i = 0; i < v.size; ++i) write_le<double>(out, v.data[i]);
  require(out.good(), ErrorKind::Io, "failed writing model");
}

StackedModel load_model(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  require(in.gcount() == 8 && magic == kMagic, ErrorKind::Io, "not a model file");
  const auto version = read_le<std::uint32_t>(in);
  require(version == kModelFormatVersion, ErrorKind::Io, "unsupported model format version " + std::to_string(version));
  const auto len = read_le<std::uint64_t>(in);
  require(len < (1u << 26), ErrorKind::Io, "model header too large");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  require(static_cast<std::uint64_t>(in.gcount()) == len, ErrorKind::Io, "truncated model header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("bad model header: ") + e.what());
  }
  StackedModel m = skeleton_from(h);
  auto views = parameter_views(m);
  const auto& blocks = h.at("blocks");
  require(blocks.size() == views.size(), ErrorKind::Io, "block table does not match layer layout");
  for (std::size_t b = 0; b < views.size(); ++b) {
    require(blocks[b].at("name").get<std::string>() == views[b].name &&
                blocks[b].at("size").get<Eigen::Index>() == views[b].size,
            ErrorKind::Io, "block table mismatch at " + views[b].name);
    for (Eigen::Index i = 0; i < views[b].size; ++i) views[b].data[i] = read_le<double>(in);
  }
  m.validate();
  return m;
}

void save_model(const StackedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.is_open(), ErrorKind::Io, "cannot open " + path);
  save_model(model, out);
}

StackedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorKind::Io, "cannot open " + path);
  return load_model(in);
}

std::string dump_model_json(const StackedModel& model) {
  nlohmann::json j = header_of(model);
  StackedModel copy = model;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& v : parameter_views(copy)) params[v.name] = std::vector<double>(v.data, v.data + v.size);
  j["params"] = params;
  return j.dump(2);
}

}  // namespace ssmsec
