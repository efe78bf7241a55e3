#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "tomoforge/cli/cli.hpp"
#include "tomoforge/cli/config.hpp"
#include "tomoforge/ct/fbp.hpp"
#include "tomoforge/ct/simulator.hpp"
#include "tomoforge/ct/tv.hpp"
#include "tomoforge/io/image_io.hpp"
#include "tomoforge/io/phantom.hpp"
#include "tomoforge/metrics.hpp"
#include "tomoforge/recon/reconstructor.hpp"

namespace tomoforge::cli {

using tomoforge::to_string;

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kEvalHeader = "method,intensity,psnr_db,ssim";
constexpr const char* kBenchHeader = "phantom,method,intensity,psnr_db,ssim";

// Usage problems detected after parsing (missing inputs, bad combinations).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string intensity_tag(double intensity) {
  std::ostringstream os;
  os << intensity;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw FormatError(path.string() + ": write error");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

// Flags collected by CLI11 that override config values when given.
struct Overrides {
  std::string config_path;
  std::optional<std::string> phantom;
  std::optional<std::size_t> size;
  std::optional<std::size_t> angles;
  std::optional<std::size_t> bins;
  std::optional<double> pixel_size;
  std::optional<double> intensity;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> net_seed;
  std::optional<double> background;
  std::optional<std::string> filter;
  std::optional<double> freq_scale;
  std::optional<double> lambda;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> tv_iterations;
  std::optional<double> step_ratio;
  std::optional<double> lr;
  std::optional<std::string> checkpoint_mode;
  std::optional<std::size_t> curve_stride;
  std::optional<std::string> optimizer;
  std::optional<double> weight_decay;
  std::optional<std::size_t> depth;
  std::optional<std::size_t> channels;
  std::optional<std::string> out;
  std::optional<std::string> sinogram;
  std::optional<std::string> ground_truth;
  std::optional<std::string> recon;
  std::optional<std::string> csv;
};

void add_config_flag(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON run configuration (flags take precedence)");
}

void add_scan_flags(CLI::App* app, Overrides& o) {
  app->add_option("--phantom", o.phantom, "phantom name: shepp-logan | disks");
  app->add_option("--size", o.size, "image side length in pixels");
  app->add_option("--angles", o.angles, "number of projection angles");
  app->add_option("--bins", o.bins, "detector bins (0 = automatic)");
  app->add_option("--pixel-size", o.pixel_size, "pixel pitch in mm");
  app->add_option("--seed", o.seed, "noise seed");
  app->add_option("--background", o.background, "scatter/background counts per bin");
}

void add_method_flags(CLI::App* app, Overrides& o) {
  app->add_option("--filter", o.filter, "FBP window: hann | ramp");
  app->add_option("--freq-scale", o.freq_scale, "FBP cut-off as a fraction of Nyquist");
  app->add_option("--lambda", o.lambda, "TV weight");
  app->add_option("--step-ratio", o.step_ratio, "TV primal/dual step balance");
  app->add_option("--lr", o.lr, "learning rate of the proposed method");
  app->add_option("--checkpoint-mode", o.checkpoint_mode, "best_psnr | best_loss");
  app->add_option("--curve-stride", o.curve_stride, "record every k-th iteration");
  app->add_option("--optimizer", o.optimizer, "adamw | sgd");
  app->add_option("--weight-decay", o.weight_decay, "AdamW weight decay");
  app->add_option("--depth", o.depth, "convolution layers");
  app->add_option("--net-seed", o.net_seed, "network initialization seed");
  app->add_option("--channels", o.channels, "feature channels");
}

// Config file first, then flags; the result is validated.
RunConfig effective_config(const Overrides& o, const std::optional<Method>& method = std::nullopt,
                           const RunConfig& base = {}) {
  RunConfig c = o.config_path.empty() ? base : load_config(o.config_path, base);
  SimulatorBlock& s = c.simulator;
  if (o.phantom) s.phantom = *o.phantom;
  if (o.size) s.size = *o.size;
  if (o.intensity) s.intensity = *o.intensity;
  if (o.seed) s.seed = *o.seed;
  if (o.background) s.background = {*o.background};
  if (o.angles) c.geometry.num_angles = *o.angles;
  if (o.bins) c.geometry.num_bins = *o.bins;
  if (o.pixel_size) c.geometry.pixel_size = *o.pixel_size;
  try {
    if (o.filter) c.fbp.window = filter_window_from_string(*o.filter);
    if (o.checkpoint_mode) c.recon.checkpoint_mode = checkpoint_mode_from_string(*o.checkpoint_mode);
    if (o.optimizer) c.recon.config.optimizer = optimizer_kind_from_string(*o.optimizer);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.freq_scale) c.fbp.frequency_scaling = *o.freq_scale;
  if (o.lambda) c.tv.config.lambda = *o.lambda;
  if (o.step_ratio) c.tv.config.step_ratio = *o.step_ratio;
  if (o.tv_iterations) c.tv.config.iterations = *o.tv_iterations;
  // A bare --iterations applies to the method being run.
  if (o.iterations) {
    if (method == Method::tv) {
      c.tv.config.iterations = *o.iterations;
    } else {
      c.recon.config.iterations = *o.iterations;
    }
  }
  ReconConfig& r = c.recon.config;
  if (o.net_seed) r.seed = *o.net_seed;
  if (o.lr) r.lr = *o.lr;
  if (o.curve_stride) r.curve_stride = *o.curve_stride;
  if (o.weight_decay) r.weight_decay = *o.weight_decay;
  if (o.depth) r.network.depth = *o.depth;
  if (o.channels) r.network.channels = *o.channels;
  if (o.out) c.io.out = *o.out;
  if (o.sinogram) c.io.sinogram = *o.sinogram;
  if (o.ground_truth) c.io.ground_truth = *o.ground_truth;
  if (o.recon) c.io.recon = *o.recon;
  if (o.csv) c.io.csv = *o.csv;
  c.validate();
  return c;
}

std::vector<double> background_for(const SimulatorBlock& s, std::size_t sino_size) {
  if (s.background.size() > 1 && s.background.size() != sino_size) {
    throw ConfigError("/simulator/background: expected a scalar or " + std::to_string(sino_size) +
                      " values, got " + std::to_string(s.background.size()));
  }
  return s.background;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Overrides& o, std::ostream& out) {
  const RunConfig c = effective_config(o);
  if (!c.simulator.intensity) throw UsageError("--intensity is required");
  if (!c.io.out) throw UsageError("--out is required");
  const fs::path dir = *c.io.out;
  fs::create_directories(dir);

  const SimulatorBlock& s = c.simulator;
  const Image truth = make_phantom(s.phantom, s.size);
  const FanBeamGeometry geom = c.geometry.resolve(s.size);
  const double intensity = *s.intensity;
  const std::vector<double> bg = background_for(s, geom.num_angles * geom.num_bins);
  const CountsSinogram counts = simulate_counts(truth, geom, intensity, bg, RngSeed{s.seed});
  const Sinogram sino = counts_to_sinogram(counts);

  const json scan{{"geometry", to_json(geom)},
                  {"intensity", intensity},
                  {"seed", s.seed},
                  {"background", s.background},
                  {"phantom", s.phantom}};
  write_raw_image(dir / "ground_truth.f32", truth, s.phantom + " phantom, normalized to [0, 1]",
                  {{"phantom", s.phantom}});
  write_raw(dir / "counts.f32", counts.counts, {geom.num_angles, geom.num_bins},
            "photon counts (angles x bins)", scan);
  write_raw(dir / "sinogram.f32", sino.data, {geom.num_angles, geom.num_bins},
            "post-log sinogram (angles x bins)", scan);
  out << "wrote " << (dir / "ground_truth.f32").string() << ", " << (dir / "counts.f32").string()
      << ", " << (dir / "sinogram.f32").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------- reconstruct

struct LoadedScan {
  Sinogram sino;
  FanBeamGeometry geom;
  std::optional<double> intensity;
};

LoadedScan load_scan(const fs::path& sino_path, const std::optional<std::string>& geometry_path) {
  const RawArray raw = read_raw(sino_path);
  if (raw.dims.size() != 2) throw FormatError(sino_path.string() + ": sinogram must have two dims");
  LoadedScan scan;
  scan.sino = Sinogram(raw.dims[0], raw.dims[1]);
  scan.sino.data = raw.data;
  try {
    if (geometry_path) {
      scan.geom = geometry_from_json(read_json(*geometry_path));
    } else if (raw.sidecar.contains("geometry")) {
      scan.geom = geometry_from_json(raw.sidecar.at("geometry"));
    } else {
      throw UsageError(sino_path.string() + ": sidecar has no geometry; pass --geometry");
    }
  } catch (const std::invalid_argument& e) {
    throw FormatError(sino_path.string() + ": " + e.what());
  }
  if (raw.sidecar.contains("intensity") && raw.sidecar.at("intensity").is_number()) {
    scan.intensity = raw.sidecar.at("intensity").get<double>();
  }
  return scan;
}

struct MethodResult {
  Image image;
  double seconds_total = 0.0;
  double seconds_per_iteration = 0.0;
  std::size_t iterations = 0;
  std::string curves_csv;  // empty for FBP
  json details = json::object();
};

MethodResult run_fbp(const LoadedScan& s, const RunConfig& c) {
  MethodResult r;
  const auto t0 = std::chrono::steady_clock::now();
  r.image = fbp_reconstruct(s.sino, s.geom, c.fbp);
  r.seconds_total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.seconds_per_iteration = r.seconds_total;
  r.iterations = 1;
  return r;
}

MethodResult run_tv(const LoadedScan& s, const TvConfig& cfg, const FilterSpec& fbp) {
  MethodResult r;
  const auto t0 = std::chrono::steady_clock::now();
  const Image init = fbp_reconstruct(s.sino, s.geom, fbp);
  const TvResult res = tv_reconstruct_report(s.sino, s.geom, cfg, init);
  r.seconds_total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.image = res.image;
  r.iterations = cfg.iterations;
  r.seconds_per_iteration = cfg.iterations > 0 ? r.seconds_total / static_cast<double>(cfg.iterations) : 0.0;
  std::ostringstream csv;
  csv << "iteration,objective\n";
  for (std::size_t k = 0; k < res.objective.size(); ++k) {
    csv << k << "," << format_number(res.objective[k]) << "\n";
  }
  r.curves_csv = csv.str();
  r.details = {{"lambda", cfg.lambda}, {"operator_norm", res.operator_norm}};
  return r;
}

MethodResult run_proposed(const LoadedScan& s, const RunConfig& c, const std::optional<Image>& gt,
                          std::ostream* progress) {
  ReconConfig cfg = c.recon.config;
  cfg.checkpoint_mode = c.recon.checkpoint_mode.value_or(gt ? CheckpointMode::best_psnr
                                                           : CheckpointMode::best_loss);
  MethodResult r;
  const std::size_t every = std::max<std::size_t>(1, cfg.iterations / 20);
  ProgressCallback cb;
  if (progress != nullptr) {
    cb = [&](const IterationRecord& rec) {
      if (rec.iteration % every != 0) return;
      *progress << "iteration " << rec.iteration << " loss " << format_number(rec.loss);
      if (gt) *progress << " psnr " << format_number(rec.psnr) << " ssim " << format_number(rec.ssim);
      *progress << "\n";
    };
  }
  const auto t0 = std::chrono::steady_clock::now();
  const ReconReport rep = reconstruct(s.sino, s.geom, c.fbp, cfg.seed, cfg, gt, cb);
  r.seconds_total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.image = rep.final_image;
  r.iterations = cfg.iterations;
  r.seconds_per_iteration = rep.seconds_per_iteration;
  std::ostringstream csv;
  csv << "iteration,loss,psnr,ssim\n";
  for (std::size_t k = 0; k < rep.loss_curve.size(); ++k) {
    csv << rep.curve_iterations[k] << "," << format_number(rep.loss_curve[k]) << ","
        << format_number(rep.psnr_curve.empty() ? NAN : rep.psnr_curve[k]) << ","
        << format_number(rep.ssim_curve.empty() ? NAN : rep.ssim_curve[k]) << "\n";
  }
  r.curves_csv = csv.str();
  r.details = {{"checkpoint_mode", to_string(cfg.checkpoint_mode)},
               {"best_iteration", rep.best_iteration},
               {"best_loss", rep.best_loss},
               {"final_iterate_loss", rep.final_iterate_loss},
               {"network_parameters", cfg.network.parameter_count()}};
  return r;
}

fs::path sibling(const fs::path& image_path, const std::string& suffix) {
  return fs::path(image_path.string() + suffix);
}

int cmd_reconstruct(const Overrides& o, const std::string& method_name,
                    const std::optional<std::string>& geometry_path, bool quiet, std::ostream& out,
                    std::ostream& err) {
  Method method;
  try {
    method = method_from_string(method_name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const RunConfig c = effective_config(o, method);
  if (!c.io.sinogram) throw UsageError("--sinogram is required");
  if (!c.io.out) throw UsageError("--out is required");
  const LoadedScan scan = load_scan(*c.io.sinogram, geometry_path);
  std::optional<Image> gt;
  if (c.io.ground_truth) gt = read_image(*c.io.ground_truth);

  MethodResult r;
  switch (method) {
    case Method::fbp: r = run_fbp(scan, c); break;
    case Method::tv: r = run_tv(scan, c.tv.config, c.fbp); break;
    case Method::proposed: r = run_proposed(scan, c, gt, quiet ? nullptr : &err); break;
  }

  const fs::path image_path = *c.io.out;
  ensure_parent(image_path);
  json run{{"method", to_string(method)},
           {"sinogram", *c.io.sinogram},
           {"iterations", r.iterations},
           {"seconds_total", r.seconds_total},
           {"seconds_per_iteration", r.seconds_per_iteration},
           {"details", r.details},
           {"config", to_json(c)}};
  if (scan.intensity) run["intensity"] = *scan.intensity;
  write_image(image_path, r.image, to_string(method) + " reconstruction");
  write_text(sibling(image_path, ".run.json"), run.dump(2) + "\n");
  if (!r.curves_csv.empty()) write_text(sibling(image_path, ".curves.csv"), r.curves_csv);
  out << to_string(method) << ": wrote " << image_path.string() << " ("
      << format_number(r.seconds_per_iteration) << " s/iteration)";
  if (gt) {
    out << ", psnr " << format_number(psnr(r.image, *gt)) << " dB, ssim "
        << format_number(ssim(r.image, *gt));
  }
  out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

void append_csv_row(const fs::path& path, const std::string& header, const std::string& row) {
  ensure_parent(path);
  bool need_header = true;
  if (fs::exists(path) && fs::file_size(path) > 0) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != header) {
      throw FormatError(path.string() + ": existing header '" + first + "' does not match '" +
                        header + "'");
    }
    need_header = false;
  }
  std::ofstream f(path, std::ios::binary | std::ios::app);
  if (!f) throw FormatError(path.string() + ": cannot open for appending");
  if (need_header) f << header << "\n";
  f << row << "\n";
}

int cmd_evaluate(const Overrides& o, std::optional<std::string> method,
                 std::optional<double> intensity, std::ostream& out) {
  const RunConfig c = effective_config(o);
  if (!c.io.recon) throw UsageError("--recon is required");
  if (!c.io.ground_truth) throw UsageError("--gt is required");
  const Image x_hat = read_image(*c.io.recon);
  const Image x = read_image(*c.io.ground_truth);
  if (x_hat.rows != x.rows || x_hat.cols != x.cols) {
    throw FormatError("dimension mismatch: " + *c.io.recon + " is " + std::to_string(x_hat.rows) +
                      "x" + std::to_string(x_hat.cols) + ", " + *c.io.ground_truth + " is " +
                      std::to_string(x.rows) + "x" + std::to_string(x.cols));
  }
  // Method and intensity default to what reconstruct recorded next to the image.
  const fs::path run_path = sibling(*c.io.recon, ".run.json");
  if ((!method || !intensity) && fs::exists(run_path)) {
    const json run = read_json(run_path);
    if (!method && run.contains("method")) method = run.at("method").get<std::string>();
    if (!intensity && run.contains("intensity")) intensity = run.at("intensity").get<double>();
  }
  const std::string row = method.value_or("unknown") + "," +
                          (intensity ? intensity_tag(*intensity) : std::string()) + "," +
                          format_number(psnr(x_hat, x)) + "," + format_number(ssim(x_hat, x));
  out << kEvalHeader << "\n" << row << "\n";
  if (c.io.csv) append_csv_row(*c.io.csv, kEvalHeader, row);
  return kExitOk;
}

// --------------------------------------------------------------- benchmark

struct Cell {
  std::size_t phantom = 0;
  std::size_t intensity = 0;
  Method method = Method::fbp;
  // Filled by the worker.
  bool ok = false;
  std::string error;
  double psnr_db = NAN;
  double ssim_value = NAN;
  double seconds_total = 0.0;
  double seconds_per_iteration = 0.0;
  json details = json::object();
  std::vector<std::string> artifacts;
};

int cmd_benchmark(const Overrides& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = effective_config(o, std::nullopt, desk_scale_defaults());
  if (!c.io.out) throw UsageError("--out is required");
  const std::size_t workers_cap = worker_limit();
  const fs::path root = *c.io.out;
  fs::create_directories(root);
  const BenchmarkBlock& b = c.benchmark;
  const FanBeamGeometry geom = c.geometry.resolve(c.simulator.size);
  const std::vector<double> bg = background_for(c.simulator, geom.num_angles * geom.num_bins);

  std::vector<std::string> artifacts;
  std::vector<Image> truths;
  std::vector<std::vector<LoadedScan>> scans;
  for (const std::string& name : b.phantoms) {
    const Image truth = make_phantom(name, c.simulator.size);
    const fs::path pdir = root / name;
    fs::create_directories(pdir);
    write_raw_image(pdir / "ground_truth.f32", truth, name + " phantom", {{"phantom", name}});
    artifacts.push_back(fs::relative(pdir / "ground_truth.f32", root).string());
    std::vector<LoadedScan> per_i;
    for (double intensity : b.intensities) {
      LoadedScan s;
      s.geom = geom;
      s.intensity = intensity;
      s.sino = counts_to_sinogram(simulate_counts(truth, geom, intensity, bg, RngSeed{c.simulator.seed}));
      const fs::path idir = pdir / ("I" + intensity_tag(intensity));
      fs::create_directories(idir);
      write_raw(idir / "sinogram.f32", s.sino.data, {geom.num_angles, geom.num_bins},
                "post-log sinogram (angles x bins)",
                {{"geometry", to_json(geom)}, {"intensity", intensity}, {"seed", c.simulator.seed},
                 {"phantom", name}});
      artifacts.push_back(fs::relative(idir / "sinogram.f32", root).string());
      per_i.push_back(std::move(s));
    }
    truths.push_back(truth);
    scans.push_back(std::move(per_i));
  }

  std::vector<Cell> cells;
  for (std::size_t p = 0; p < b.phantoms.size(); ++p) {
    for (std::size_t i = 0; i < b.intensities.size(); ++i) {
      for (Method m : b.methods) {
        Cell cell;
        cell.phantom = p;
        cell.intensity = i;
        cell.method = m;
        cells.push_back(cell);
      }
    }
  }

  std::mutex log_mutex;
  auto run_cell = [&](Cell& cell) {
    const std::string name = b.phantoms[cell.phantom];
    const double intensity = b.intensities[cell.intensity];
    const fs::path idir = root / name / ("I" + intensity_tag(intensity));
    const LoadedScan& scan = scans[cell.phantom][cell.intensity];
    const Image& truth = truths[cell.phantom];
    const std::string stem = to_string(cell.method);
    try {
      MethodResult r;
      if (cell.method == Method::fbp) {
        r = run_fbp(scan, c);
      } else if (cell.method == Method::tv) {
        std::vector<double> grid = c.tv.lambda_grid;
        if (grid.empty()) grid.push_back(c.tv.config.lambda);
        std::ostringstream table;
        table << "lambda,psnr_db,ssim\n";
        double best = -std::numeric_limits<double>::infinity();
        double seconds = 0.0;
        for (double lambda : grid) {
          TvConfig cfg = c.tv.config;
          cfg.lambda = lambda;
          MethodResult candidate = run_tv(scan, cfg, c.fbp);
          seconds += candidate.seconds_total;
          const double score = psnr(candidate.image, truth);
          table << format_number(lambda) << "," << format_number(score) << ","
                << format_number(ssim(candidate.image, truth)) << "\n";
          if (score > best) {
            best = score;
            r = std::move(candidate);
          }
        }
        r.details["seconds_grid_total"] = seconds;
        if (grid.size() > 1) {
          write_text(idir / "tv_grid.csv", table.str());
          cell.artifacts.push_back(fs::relative(idir / "tv_grid.csv", root).string());
        }
      } else {
        r = run_proposed(scan, c, truth, nullptr);
      }
      write_raw_image(idir / (stem + ".f32"), r.image, stem + " reconstruction",
                      {{"method", stem}, {"intensity", intensity}});
      cell.artifacts.push_back(fs::relative(idir / (stem + ".f32"), root).string());
      if (!r.curves_csv.empty()) {
        write_text(idir / (stem + ".curves.csv"), r.curves_csv);
        cell.artifacts.push_back(fs::relative(idir / (stem + ".curves.csv"), root).string());
      }
      cell.psnr_db = psnr(r.image, truth);
      cell.ssim_value = ssim(r.image, truth);
      cell.seconds_total = r.seconds_total;
      cell.seconds_per_iteration = r.seconds_per_iteration;
      cell.details = r.details;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    const std::lock_guard<std::mutex> lock(log_mutex);
    err << "[benchmark] " << name << " I=" << intensity_tag(intensity) << " " << stem << ": "
        << (cell.ok ? "psnr " + format_number(cell.psnr_db) + " dB, ssim " + format_number(cell.ssim_value)
                    : "FAILED: " + cell.error)
        << "\n";
  };

  // Cells are independent; workers pull the next index. Output order is
  // fixed by the cell list, not by completion order.
  const std::size_t n_workers = std::min(workers_cap, cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) run_cell(cells[k]);
  };
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ostringstream results;
  results << kBenchHeader << "\n";
  json cell_json = json::array();
  std::size_t failures = 0;
  for (const Cell& cell : cells) {
    const std::string name = b.phantoms[cell.phantom];
    const double intensity = b.intensities[cell.intensity];
    json cj{{"phantom", name},
            {"method", to_string(cell.method)},
            {"intensity", intensity},
            {"status", cell.ok ? "ok" : "failed"},
            {"artifacts", cell.artifacts}};
    if (cell.ok) {
      results << name << "," << to_string(cell.method) << "," << intensity_tag(intensity) << ","
              << format_number(cell.psnr_db) << "," << format_number(cell.ssim_value) << "\n";
      cj["psnr_db"] = format_number(cell.psnr_db);
      cj["ssim"] = format_number(cell.ssim_value);
      cj["seconds_total"] = cell.seconds_total;
      cj["seconds_per_iteration"] = cell.seconds_per_iteration;
      cj["details"] = cell.details;
    } else {
      ++failures;
      cj["error"] = cell.error;
    }
    for (const auto& a : cell.artifacts) artifacts.push_back(a);
    cell_json.push_back(cj);
  }
  write_text(root / "results.csv", results.str());
  artifacts.push_back("results.csv");
  artifacts.push_back("manifest.json");
  const json manifest{{"config", to_json(c)},
                      {"geometry", to_json(geom)},
                      {"workers", n_workers},
                      {"cells", cell_json},
                      {"failures", failures},
                      {"artifacts", artifacts}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
  out << results.str();
  out << "benchmark: " << cells.size() - failures << "/" << cells.size() << " cells succeeded; "
      << "manifest at " << (root / "manifest.json").string() << "\n";
  return failures == 0 ? kExitOk : kExitFailure;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-dose CT reconstruction toolkit", "tomoforge"};
  app.require_subcommand(1);
  Overrides o;

  CLI::App* sim = app.add_subcommand("simulate", "simulate a low-dose scan of a phantom");
  add_config_flag(sim, o);
  add_scan_flags(sim, o);
  sim->add_option("--intensity", o.intensity, "incident photons per ray (e.g. 1e3, 1e4, 5e4)");
  sim->add_option("--out", o.out, "output directory");

  CLI::App* rec = app.add_subcommand("reconstruct", "reconstruct an image from a sinogram");
  std::string method_name;
  std::optional<std::string> geometry_path;
  bool quiet = false;
  add_config_flag(rec, o);
  rec->add_option("--method", method_name, "fbp | tv | proposed")->required();
  rec->add_option("--sinogram", o.sinogram, "post-log sinogram (raw f32 with sidecar)");
  rec->add_option("--geometry", geometry_path, "geometry JSON (default: from the sinogram sidecar)");
  rec->add_option("--ground-truth", o.ground_truth, "reference image for PSNR/SSIM curves");
  rec->add_option("--out", o.out, "output image (.pgm or raw f32)");
  rec->add_option("--iterations", o.iterations, "iterations of the chosen method");
  rec->add_option("--seed", o.net_seed, "network initialization seed");
  rec->add_flag("--quiet", quiet, "no progress output");
  add_method_flags(rec, o);

  CLI::App* ev = app.add_subcommand("evaluate", "score a reconstruction against ground truth");
  std::optional<std::string> eval_method;
  std::optional<double> eval_intensity;
  add_config_flag(ev, o);
  ev->add_option("--recon", o.recon, "reconstructed image");
  ev->add_option("--gt", o.ground_truth, "ground-truth image");
  ev->add_option("--method", eval_method, "method label for the CSV row");
  ev->add_option("--intensity", eval_intensity, "intensity label for the CSV row");
  ev->add_option("--csv", o.csv, "CSV file to append to");

  CLI::App* bench = app.add_subcommand("benchmark", "run every method at every dose");
  add_config_flag(bench, o);
  add_scan_flags(bench, o);
  add_method_flags(bench, o);
  bench->add_option("--iterations", o.iterations, "iterations of the proposed method");
  bench->add_option("--tv-iterations", o.tv_iterations, "iterations of the TV baseline");
  bench->add_option("--out", o.out, "report directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  CLI::App* active = sim->parsed() ? sim : rec->parsed() ? rec : ev->parsed() ? ev : bench;
  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (rec->parsed()) return cmd_reconstruct(o, method_name, geometry_path, quiet, out, err);
    if (ev->parsed()) return cmd_evaluate(o, eval_method, eval_intensity, out);
    return cmd_benchmark(o, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << active->help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace tomoforge::cli
