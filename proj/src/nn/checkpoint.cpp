#include "tomoforge/nn/checkpoint.hpp"

#include <vector>

#include "tomoforge/io/image_io.hpp"

namespace tomoforge::nn {

nlohmann::json to_json(const NetworkSpec& spec) {
  return {{"depth", spec.depth},
          {"channels", spec.channels},
          {"in_channels", spec.in_channels},
          {"out_channels", spec.out_channels},
          {"leaky_slope", spec.leaky_slope},
          {"bn_eps", spec.bn_eps}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.depth = j.at("depth").get<std::size_t>();
  s.channels = j.at("channels").get<std::size_t>();
  s.in_channels = j.at("in_channels").get<std::size_t>();
  s.out_channels = j.at("out_channels").get<std::size_t>();
  s.leaky_slope = j.at("leaky_slope").get<double>();
  s.bn_eps = j.at("bn_eps").get<double>();
  s.validate();
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const Network<float>& net,
                     const nlohmann::json& extra) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : net.parameters()) {
    const Shape4 s = p->value.shape();
    tensors.push_back({{"name", p->name},
                       {"shape", {s.batch, s.channels, s.height, s.width}},
                       {"offset", flat.size()}});
    for (std::size_t i = 0; i < p->value.size(); ++i) flat.push_back(p->value[i]);
  }
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["format"] = "tomoforge-params";
  meta["seed"] = net.seed();
  meta["spec"] = to_json(net.spec());
  meta["tensors"] = std::move(tensors);
  write_raw(path, flat, {flat.size()}, "network parameters", meta);
}

Network<float> load_checkpoint(const std::filesystem::path& path) {
  RawArray raw = read_raw(path);
  const auto& meta = raw.sidecar;
  const std::string where = sidecar_path(path).string();
  if (meta.value("format", "") != "tomoforge-params") {
    throw FormatError(where + ": not a parameter manifest");
  }
  NetworkSpec spec;
  std::uint64_t seed = 0;
  try {
    spec = network_spec_from_json(meta.at("spec"));
    seed = meta.at("seed").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  Network<float> net(spec, seed);
  const auto& tensors = meta.at("tensors");
  const auto& params = net.parameters();
  if (!tensors.is_array() || tensors.size() != params.size()) {
    throw FormatError(where + ": tensor list does not match the network layout");
  }
  if (raw.data.size() != net.parameter_count()) {
    throw FormatError(path.string() + ": holds " + std::to_string(raw.data.size()) +
                      " values, network needs " + std::to_string(net.parameter_count()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const Shape4 s = p.value.shape();
    const auto& t = tensors[k];
    const std::vector<std::size_t> shape = t.at("shape").get<std::vector<std::size_t>>();
    if (t.at("name").get<std::string>() != p.name ||
        shape != std::vector<std::size_t>{s.batch, s.channels, s.height, s.width}) {
      throw FormatError(where + ": tensor " + std::to_string(k) + " does not match '" + p.name + "'");
    }
    const std::size_t off = t.at("offset").get<std::size_t>();
    if (off + p.value.size() > raw.data.size()) {
      throw FormatError(where + ": tensor '" + p.name + "' runs past the end of the data");
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<float>(raw.data[off + i]);
  }
  return net;
}

}  // namespace tomoforge::nn
