#include "tomoforge/cli/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <thread>

namespace tomoforge::cli {

using tomoforge::to_string;

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

// Walks one JSON object, dispatching each key to its handler and rejecting
// keys without one.
void walk(const json& j, const std::string& path,
          const std::map<std::string, std::function<void(const json&, const std::string&)>>& handlers) {
  if (!j.is_object()) fail(path.empty() ? "/" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = handlers.find(key);
    const std::string sub = path + "/" + key;
    if (it == handlers.end()) fail(sub, "unknown key");
    it->second(value, sub);
  }
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "must be finite");
  return d;
}

double positive(const json& v, const std::string& path) {
  const double d = number(v, path);
  if (!(d > 0.0)) fail(path, "must be > 0");
  return d;
}

double nonnegative(const json& v, const std::string& path) {
  const double d = number(v, path);
  if (!(d >= 0.0)) fail(path, "must be >= 0");
  return d;
}

std::uint64_t count(const json& v, const std::string& path) {
  if (!v.is_number_unsigned()) fail(path, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

std::vector<double> number_list(const json& v, const std::string& path,
                                double (*elem)(const json&, const std::string&)) {
  if (v.is_number()) return {elem(v, path)};
  if (!v.is_array()) fail(path, "expected a number or an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(elem(v[i], path + "/" + std::to_string(i)));
  return out;
}

// Converts std::invalid_argument from enum parsers into a path-tagged error.
template <class F>
auto parse_enum(const json& v, const std::string& path, F from_string) {
  const std::string s = text(v, path);
  try {
    return from_string(s);
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::fbp: return "fbp";
    case Method::tv: return "tv";
    case Method::proposed: return "proposed";
  }
  return "fbp";
}

Method method_from_string(const std::string& name) {
  if (name == "fbp") return Method::fbp;
  if (name == "tv") return Method::tv;
  if (name == "proposed") return Method::proposed;
  throw std::invalid_argument("unknown method '" + name + "' (expected fbp, tv or proposed)");
}

FanBeamGeometry GeometryBlock::resolve(std::size_t n) const {
  FanBeamGeometry g = make_geometry(n, n, num_angles.value_or(360), num_bins.value_or(0),
                                    pixel_size.value_or(kDefaultPixelSize),
                                    source_axis_dist.value_or(500.0),
                                    axis_detector_dist.value_or(500.0));
  if (detector_width) g.detector_width = *detector_width;
  if (angle_range) g.angle_range = *angle_range;
  g.validate();
  return g;
}

RunConfig desk_scale_defaults() {
  RunConfig c;
  c.simulator.size = 64;
  c.geometry.num_angles = 180;
  c.tv.lambda_grid = {0.1, 0.3, 1.0, 3.0, 10.0};
  c.recon.config.iterations = 500;
  c.recon.config.network.depth = 10;
  c.recon.config.network.channels = 32;
  return c;
}

RunConfig parse_config(const json& j, RunConfig c) {
  walk(j, "", {
    {"geometry", [&](const json& v, const std::string& p) {
      GeometryBlock& g = c.geometry;
      walk(v, p, {
        {"num_angles", [&](const json& x, const std::string& q) { g.num_angles = count(x, q); }},
        {"num_bins", [&](const json& x, const std::string& q) { g.num_bins = count(x, q); }},
        {"pixel_size", [&](const json& x, const std::string& q) { g.pixel_size = positive(x, q); }},
        {"source_axis_dist", [&](const json& x, const std::string& q) { g.source_axis_dist = positive(x, q); }},
        {"axis_detector_dist", [&](const json& x, const std::string& q) { g.axis_detector_dist = positive(x, q); }},
        {"detector_width", [&](const json& x, const std::string& q) { g.detector_width = positive(x, q); }},
        {"angle_range", [&](const json& x, const std::string& q) { g.angle_range = positive(x, q); }},
      });
    }},
    {"simulator", [&](const json& v, const std::string& p) {
      SimulatorBlock& s = c.simulator;
      walk(v, p, {
        {"phantom", [&](const json& x, const std::string& q) { s.phantom = text(x, q); }},
        {"size", [&](const json& x, const std::string& q) { s.size = count(x, q); }},
        {"intensity", [&](const json& x, const std::string& q) { s.intensity = positive(x, q); }},
        {"seed", [&](const json& x, const std::string& q) { s.seed = count(x, q); }},
        {"background", [&](const json& x, const std::string& q) { s.background = number_list(x, q, nonnegative); }},
      });
    }},
    {"fbp", [&](const json& v, const std::string& p) {
      walk(v, p, {
        {"window", [&](const json& x, const std::string& q) { c.fbp.window = parse_enum(x, q, filter_window_from_string); }},
        {"frequency_scale", [&](const json& x, const std::string& q) { c.fbp.frequency_scaling = positive(x, q); }},
      });
    }},
    {"tv", [&](const json& v, const std::string& p) {
      TvBlock& t = c.tv;
      walk(v, p, {
        {"lambda", [&](const json& x, const std::string& q) { t.config.lambda = nonnegative(x, q); }},
        {"iterations", [&](const json& x, const std::string& q) { t.config.iterations = count(x, q); }},
        {"step_ratio", [&](const json& x, const std::string& q) { t.config.step_ratio = positive(x, q); }},
        {"lambda_grid", [&](const json& x, const std::string& q) { t.lambda_grid = number_list(x, q, nonnegative); }},
      });
    }},
    {"recon", [&](const json& v, const std::string& p) {
      ReconBlock& r = c.recon;
      walk(v, p, {
        {"iterations", [&](const json& x, const std::string& q) { r.config.iterations = count(x, q); }},
        {"lr", [&](const json& x, const std::string& q) { r.config.lr = positive(x, q); }},
        {"seed", [&](const json& x, const std::string& q) { r.config.seed = count(x, q); }},
        {"checkpoint_mode", [&](const json& x, const std::string& q) { r.checkpoint_mode = parse_enum(x, q, checkpoint_mode_from_string); }},
        {"curve_stride", [&](const json& x, const std::string& q) { r.config.curve_stride = count(x, q); }},
        {"optimizer", [&](const json& x, const std::string& q) { r.config.optimizer = parse_enum(x, q, optimizer_kind_from_string); }},
        {"weight_decay", [&](const json& x, const std::string& q) { r.config.weight_decay = nonnegative(x, q); }},
        {"depth", [&](const json& x, const std::string& q) { r.config.network.depth = count(x, q); }},
        {"channels", [&](const json& x, const std::string& q) { r.config.network.channels = count(x, q); }},
      });
    }},
    {"benchmark", [&](const json& v, const std::string& p) {
      BenchmarkBlock& b = c.benchmark;
      walk(v, p, {
        {"phantoms", [&](const json& x, const std::string& q) {
          if (!x.is_array() || x.empty()) fail(q, "expected a non-empty array of names");
          b.phantoms.clear();
          for (std::size_t i = 0; i < x.size(); ++i) b.phantoms.push_back(text(x[i], q + "/" + std::to_string(i)));
        }},
        {"intensities", [&](const json& x, const std::string& q) { b.intensities = number_list(x, q, positive); }},
        {"methods", [&](const json& x, const std::string& q) {
          if (!x.is_array() || x.empty()) fail(q, "expected a non-empty array of methods");
          b.methods.clear();
          for (std::size_t i = 0; i < x.size(); ++i) {
            b.methods.push_back(parse_enum(x[i], q + "/" + std::to_string(i), method_from_string));
          }
        }},
      });
    }},
    {"io", [&](const json& v, const std::string& p) {
      IoBlock& io = c.io;
      walk(v, p, {
        {"out", [&](const json& x, const std::string& q) { io.out = text(x, q); }},
        {"sinogram", [&](const json& x, const std::string& q) { io.sinogram = text(x, q); }},
        {"ground_truth", [&](const json& x, const std::string& q) { io.ground_truth = text(x, q); }},
        {"recon", [&](const json& x, const std::string& q) { io.recon = text(x, q); }},
        {"csv", [&](const json& x, const std::string& q) { io.csv = text(x, q); }},
      });
    }},
  });
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON at byte " + std::to_string(e.byte));
  }
  try {
    return parse_config(j, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void RunConfig::validate() const {
  if (simulator.size < 16) fail("/simulator/size", "must be >= 16");
  if (simulator.intensity && !(*simulator.intensity > 0.0)) fail("/simulator/intensity", "must be > 0");
  if (geometry.num_angles && *geometry.num_angles == 0) fail("/geometry/num_angles", "must be >= 1");
  try {
    fbp.validate();
  } catch (const std::invalid_argument& e) {
    fail("/fbp", e.what());
  }
  try {
    tv.config.validate();
  } catch (const std::invalid_argument& e) {
    fail("/tv", e.what());
  }
  try {
    recon.config.validate();
  } catch (const std::invalid_argument& e) {
    fail("/recon", e.what());
  }
  if (benchmark.intensities.empty()) fail("/benchmark/intensities", "must not be empty");
}

json to_json(const RunConfig& c) {
  json geometry = json::object();
  if (c.geometry.num_angles) geometry["num_angles"] = *c.geometry.num_angles;
  if (c.geometry.num_bins) geometry["num_bins"] = *c.geometry.num_bins;
  if (c.geometry.pixel_size) geometry["pixel_size"] = *c.geometry.pixel_size;
  if (c.geometry.source_axis_dist) geometry["source_axis_dist"] = *c.geometry.source_axis_dist;
  if (c.geometry.axis_detector_dist) geometry["axis_detector_dist"] = *c.geometry.axis_detector_dist;
  if (c.geometry.detector_width) geometry["detector_width"] = *c.geometry.detector_width;
  if (c.geometry.angle_range) geometry["angle_range"] = *c.geometry.angle_range;

  json simulator{{"phantom", c.simulator.phantom},
                 {"size", c.simulator.size},
                 {"seed", c.simulator.seed},
                 {"background", c.simulator.background}};
  if (c.simulator.intensity) simulator["intensity"] = *c.simulator.intensity;

  const ReconConfig& r = c.recon.config;
  json recon{{"iterations", r.iterations},
             {"lr", r.lr},
             {"seed", r.seed},
             {"curve_stride", r.curve_stride},
             {"optimizer", to_string(r.optimizer)},
             {"weight_decay", r.weight_decay},
             {"depth", r.network.depth},
             {"channels", r.network.channels}};
  if (c.recon.checkpoint_mode) recon["checkpoint_mode"] = to_string(*c.recon.checkpoint_mode);

  json io = json::object();
  if (c.io.out) io["out"] = *c.io.out;
  if (c.io.sinogram) io["sinogram"] = *c.io.sinogram;
  if (c.io.ground_truth) io["ground_truth"] = *c.io.ground_truth;
  if (c.io.recon) io["recon"] = *c.io.recon;
  if (c.io.csv) io["csv"] = *c.io.csv;

  json methods = json::array();
  for (Method m : c.benchmark.methods) methods.push_back(to_string(m));
  return json{{"geometry", geometry},
              {"simulator", simulator},
              {"fbp", {{"window", to_string(c.fbp.window)}, {"frequency_scale", c.fbp.frequency_scaling}}},
              {"tv", {{"lambda", c.tv.config.lambda},
                      {"iterations", c.tv.config.iterations},
                      {"step_ratio", c.tv.config.step_ratio},
                      {"lambda_grid", c.tv.lambda_grid}}},
              {"recon", recon},
              {"benchmark", {{"phantoms", c.benchmark.phantoms},
                             {"intensities", c.benchmark.intensities},
                             {"methods", methods}}},
              {"io", io}};
}

std::size_t worker_limit() {
  if (const char* env = std::getenv("TOMOFORGE_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
      throw ConfigError(std::string("TOMOFORGE_THREADS=") + env + ": expected a positive integer");
    }
    return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

}  // namespace tomoforge::cli
