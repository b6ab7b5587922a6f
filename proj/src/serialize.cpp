#include "advlens/serialize.hpp"

#include <json.hpp>

#include "advlens/error.hpp"
#include "binary_io.hpp"

namespace advlens {

namespace {
constexpr std::string_view kTensorMagic = "ADVTNSR1";
constexpr std::string_view kNetworkMagic = "ADVNET01";
constexpr int kNetworkVersion = 1;
}  // namespace

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  auto os = io::open_out(path);
  os.write(kTensorMagic.data(), kTensorMagic.size());
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) io::write<std::uint64_t>(os, d);
  io::write_array(os, t.values());
  if (!os) throw FormatError("failed writing '" + path.string() + "'");
}

Tensor load_tensor(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kTensorMagic, path);
  const auto rank = io::read<std::uint32_t>(is);
  if (rank > 16) throw FormatError("implausible tensor rank in '" + path.string() + "'");
  Shape shape(rank);
  for (auto& d : shape) d = io::read<std::uint64_t>(is);
  std::vector<double> data(shape_size(shape));
  io::read_array(is, data);
  return Tensor(std::move(shape), std::move(data));
}

namespace {

nlohmann::json layer_to_json(const LayerSpec& s) {
  nlohmann::json j{{"name", s.name}, {"kind", to_string(s.kind)}};
  switch (s.kind) {
    case LayerKind::conv2d:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["padding"] = s.padding;
      break;
    case LayerKind::maxpool2d:
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      break;
    case LayerKind::dense:
      j["in_units"] = s.in_units;
      j["out_units"] = s.out_units;
      break;
    default: break;
  }
  return j;
}

}  // namespace

nlohmann::json network_spec_to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  return {{"input_shape", spec.input_shape}, {"layers", layers}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.input_shape = j.at("input_shape").get<Shape>();
  for (const auto& lj : j.at("layers")) {
    LayerSpec s;
    s.name = lj.at("name").get<std::string>();
    s.kind = parse_layer_kind(lj.at("kind").get<std::string>());
    s.in_channels = lj.value("in_channels", std::size_t{0});
    s.out_channels = lj.value("out_channels", std::size_t{0});
    s.kernel = lj.value("kernel", std::size_t{0});
    s.stride = lj.value("stride", std::size_t{1});
    s.padding = lj.value("padding", std::size_t{0});
    s.in_units = lj.value("in_units", std::size_t{0});
    s.out_units = lj.value("out_units", std::size_t{0});
    spec.layers.push_back(std::move(s));
  }
  return spec;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  nlohmann::json header = network_spec_to_json(net.spec());
  header["format_version"] = kNetworkVersion;
  const std::string text = header.dump();
  auto os = io::open_out(path);
  os.write(kNetworkMagic.data(), kNetworkMagic.size());
  io::write<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& l : net.layers()) {
    io::write_array(os, l.weight.values());
    io::write_array(os, l.bias.values());
  }
  if (!os) throw FormatError("failed writing '" + path.string() + "'");
}

Network load_network(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kNetworkMagic, path);
  const auto len = io::read<std::uint64_t>(is);
  if (len > (1u << 24)) throw FormatError("implausible network header size");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("truncated network header in '" + path.string() + "'");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad network header in '" + path.string() + "': " + e.what());
  }
  if (header.value("format_version", 0) != kNetworkVersion) {
    throw FormatError("unsupported network format version in '" + path.string() + "'");
  }
  Network net = build_network(network_spec_from_json(header), 0);
  for (auto& l : net.mutable_layers()) {
    io::read_array(is, l.weight.values());
    io::read_array(is, l.bias.values());
  }
  return net;
}

}  // namespace advlens
