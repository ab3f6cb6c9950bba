// transweather: dataset generation, training, restoration, evaluation,
// gradient verification and decoder attention dumps.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "transweather/checkpoint.hpp"
#include "transweather/convert.hpp"
#include "transweather/degradation.hpp"
#include "transweather/error.hpp"
#include "transweather/gradcheck.hpp"
#include "transweather/metrics.hpp"
#include "transweather/network.hpp"
#include "transweather/run_config.hpp"
#include "transweather/trainer.hpp"

namespace fs = std::filesystem;
using namespace tw;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

// Sidecar written next to every checkpoint so later commands rebuild the same network.
fs::path config_sidecar(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".cfg"); }

RunConfig resolve_config(const Globals& g, const std::optional<fs::path>& checkpoint = std::nullopt) {
  RunConfig config;
  if (!g.config_path.empty()) {
    config = load_run_config(g.config_path);
  } else if (checkpoint && fs::exists(config_sidecar(*checkpoint))) {
    config = load_run_config(config_sidecar(*checkpoint));
  }
  if (g.seed) config.set_seed(*g.seed);
  config.validate();
  return config;
}

void note(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << msg << '\n';
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

std::unique_ptr<TransWeather<float>> load_network(const RunConfig& config, const fs::path& checkpoint) {
  auto net = std::make_unique<TransWeather<float>>(config.network);
  restore_checkpoint(load_checkpoint(checkpoint), net->parameters(), nullptr);
  return net;
}

Image run_network(const TransWeather<float>& net, const Image& input) {
  if (input.channels != 3) throw InputError("expected a 3-channel image");
  NoGradGuard no_grad;
  return tensor_to_image(net.restore(image_to_tensor<float>(input)));
}

struct GenArgs {
  std::optional<std::size_t> count;
  std::optional<std::string> mix;
  std::optional<std::size_t> size;
  std::optional<double> min_intensity, max_intensity;
  std::string out;
};

int cmd_gen(const Globals& g, const GenArgs& a) {
  auto config = resolve_config(g);
  if (a.count) config.data.count = *a.count;
  if (a.mix) set_config_value(config, "data.mix", *a.mix);
  if (a.size) config.data.height = config.data.width = *a.size;
  if (a.min_intensity) config.data.min_intensity = *a.min_intensity;
  if (a.max_intensity) config.data.max_intensity = *a.max_intensity;
  config.validate();
  const auto rows = gen_dataset(config.data, a.out);
  std::map<std::string, std::size_t> per_kind;
  for (const auto& r : rows) ++per_kind[std::string(to_string(r.kind))];
  for (auto k : kAllWeatherKinds) std::cout << to_string(k) << '\t' << per_kind[std::string(to_string(k))] << '\n';
  note(g, "wrote " + std::to_string(rows.size()) + " pairs and " + (fs::path(a.out) / "manifest.tsv").string());
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string resume;
  std::string log;
  std::optional<std::uint64_t> steps;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto config = resolve_config(g, a.resume.empty() ? std::nullopt : std::optional<fs::path>(a.resume));
  Trainer trainer(config, load_paired_data(a.manifest));
  if (!a.resume.empty()) {
    trainer.resume(load_checkpoint(a.resume));
    note(g, "resumed at step " + std::to_string(trainer.step()));
  }
  {
    std::ofstream cfg(config_sidecar(a.out));
    if (!cfg) throw IoError("cannot write " + config_sidecar(a.out).string());
    cfg << to_text(config);
  }
  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + a.log);
    log = &log_file;
  }
  note(g, std::to_string(trainer.network().parameters().parameter_count()) + " parameters, " +
              std::to_string(trainer.total_steps()) + " steps");
  const std::uint64_t stop = a.steps ? trainer.step() + *a.steps : std::numeric_limits<std::uint64_t>::max();
  const auto result = trainer.run(stop, log, fs::path(a.out));
  if (!result.step_losses.empty()) {
    std::cout << "final_loss\t" << result.step_losses.back() << '\n';
  }
  std::cout << "steps\t" << result.last_step << '\n';
  return 0;
}

int cmd_restore(const Globals& g, const std::string& checkpoint, const std::string& input, const std::string& output) {
  const auto config = resolve_config(g, fs::path(checkpoint));
  const auto net = load_network(config, checkpoint);
  const auto image = read_image(input);
  const auto restored = run_network(*net, image);
  write_image(output, restored);
  note(g, "restored " + input + " -> " + output);
  return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& manifest) {
  std::unique_ptr<TransWeather<float>> net;
  if (!checkpoint.empty()) net = load_network(resolve_config(g, fs::path(checkpoint)), checkpoint);
  struct Acc {
    double psnr = 0, ssim = 0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> groups;
  for (const auto& row : read_manifest(manifest)) {
    const auto clean = read_image(row.clean);
    auto candidate = read_image(row.degraded);
    if (net) candidate = run_network(*net, candidate);
    const double p = psnr(candidate, clean), s = ssim(candidate, clean);
    for (const std::string& key : {std::string(to_string(row.kind)), std::string("overall")}) {
      auto& acc = groups[key];
      acc.psnr += p;
      acc.ssim += s;
      ++acc.n;
    }
  }
  for (const std::string key : {"raindrop", "rain_fog", "snow", "overall"}) {
    const auto it = groups.find(key);
    if (it == groups.end()) continue;
    const auto& acc = it->second;
    std::cout << key << ".count\t" << acc.n << '\n'
              << key << ".psnr\t" << format_metric(acc.psnr / static_cast<double>(acc.n)) << '\n'
              << key << ".ssim\t" << format_metric(acc.ssim / static_cast<double>(acc.n)) << '\n';
  }
  return 0;
}

int cmd_gradcheck(const Globals& g, bool inject_fault, std::size_t size, std::size_t coords) {
  GradCheckOptions options;
  options.inject_fault = inject_fault;
  if (g.seed) options.seed = *g.seed;
  bool ok = true;
  const auto print = [&](const GradCheckResult& r) {
    std::cout << r.name << '\t' << r.max_rel_error << '\t' << (r.passed ? "pass" : "FAIL") << '\n';
    ok = ok && r.passed;
  };
  for (const auto& c : gradcheck_registry(options)) print(c.run(options));
  print(check_network_gradient(options, size, coords));
  return ok ? 0 : 1;
}

struct AttnArgs {
  std::string checkpoint;
  std::string input;
  std::string out_dir;
  std::string queries = "all";
};

int cmd_attn_dump(const Globals& g, const AttnArgs& a) {
  const auto config = resolve_config(g, fs::path(a.checkpoint));
  if (!config.network.weather_queries) throw InputError("attn-dump needs weather_queries=on");
  const auto net = load_network(config, a.checkpoint);
  const auto image = read_image(a.input);
  const std::size_t kq = config.network.num_queries;
  std::vector<std::size_t> picks;
  if (a.queries == "all") {
    for (std::size_t k = 0; k < kq; ++k) picks.push_back(k);
  } else {
    std::stringstream ss(a.queries);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t k = 0;
      try {
        k = std::stoul(item);
      } catch (const std::exception&) {
        throw InputError("bad query index '" + item + "'");
      }
      if (k >= kq) throw InputError("query index " + item + " out of range (Kq = " + std::to_string(kq) + ")");
      picks.push_back(k);
    }
  }
  NoGradGuard no_grad;
  const auto trace = net->trace(image_to_tensor<float>(image));
  const auto& weights = trace.task->attention;  // [1, h, Kq, N4]
  const auto& deepest = trace.pyramid.stages.back();
  const std::size_t heads = weights.dim(1), n = weights.dim(3);
  const std::size_t gh = deepest.dim(2), gw = deepest.dim(3);
  fs::create_directories(a.out_dir);
  for (std::size_t k : picks) {
    std::vector<double> map(n, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < n; ++j) map[j] += weights.data()[(h * kq + k) * n + j] / static_cast<double>(heads);
    }
    double total = 0.0;
    for (double v : map) total += v;
    const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
    const double span = *hi - *lo;
    Image out(1, image.height, image.width);
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        const double v = map[(y * gh / image.height) * gw + x * gw / image.width];
        out.at(0, y, x) = static_cast<float>(span > 0 ? (v - *lo) / span : 0.0);
      }
    }
    const auto path = fs::path(a.out_dir) / ("query_" + std::to_string(k) + ".png");
    write_png(path, out);
    std::cout << "query\t" << k << "\tweight_sum\t" << format_metric(total) << '\t' << path.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TransWeather at desk scale: synthetic all-weather restoration"};
  app.require_subcommand(1);
  // Global flags are accepted after the subcommand name too.
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "key=value run configuration file");
  app.add_option("--seed", g.seed, "seed overriding the config");
  app.add_flag("--verbose", g.verbose, "progress messages on stderr");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate paired clean/degraded images and a manifest");
  gen_cmd->add_option("--count", gen.count, "number of pairs");
  gen_cmd->add_option("--mix", gen.mix, "uniform, paper or raindrop:w,rain_fog:w,snow:w");
  gen_cmd->add_option("--size", gen.size, "image side length");
  gen_cmd->add_option("--min-intensity", gen.min_intensity, "lowest degradation intensity");
  gen_cmd->add_option("--max-intensity", gen.max_intensity, "highest degradation intensity");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train on a manifest and write a checkpoint");
  train_cmd->add_option("--manifest", train.manifest, "dataset manifest")->required();
  train_cmd->add_option("--out", train.out, "checkpoint path")->required();
  train_cmd->add_option("--resume", train.resume, "continue from this checkpoint");
  train_cmd->add_option("--log", train.log, "per-epoch log file (default stdout)");
  train_cmd->add_option("--steps", train.steps, "stop after this many optimizer steps");

  std::string ckpt, input, output;
  auto* restore_cmd = app.add_subcommand("restore", "restore one degraded image");
  restore_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  restore_cmd->add_option("--input", input, "degraded image (.twimg or .png)")->required();
  restore_cmd->add_option("--output", output, "restored image (.twimg or .png)")->required();

  std::string eval_ckpt, eval_manifest;
  auto* eval_cmd = app.add_subcommand("eval", "per-kind PSNR/SSIM over a manifest");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "restore inputs first (omit to score inputs as-is)");
  eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest")->required();

  bool inject_fault = false;
  std::size_t gc_size = 32, gc_coords = 20;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op and the full network");
  gc_cmd->add_flag("--inject-fault", inject_fault, "add an op with a wrong backward (negative control)");
  gc_cmd->add_option("--size", gc_size, "network probe image side");
  gc_cmd->add_option("--coords", gc_coords, "minimum sampled parameter coordinates");

  AttnArgs attn;
  auto* attn_cmd = app.add_subcommand("attn-dump", "write decoder attention maps per weather query");
  attn_cmd->add_option("--checkpoint", attn.checkpoint, "trained checkpoint")->required();
  attn_cmd->add_option("--input", attn.input, "input image")->required();
  attn_cmd->add_option("--out-dir", attn.out_dir, "directory for query_<k>.png")->required();
  attn_cmd->add_option("--queries", attn.queries, "comma-separated query indices or 'all'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return cmd_gen(g, gen);
    if (*train_cmd) return cmd_train(g, train);
    if (*restore_cmd) return cmd_restore(g, ckpt, input, output);
    if (*eval_cmd) return cmd_eval(g, eval_ckpt, eval_manifest);
    if (*gc_cmd) return cmd_gradcheck(g, inject_fault, gc_size, gc_coords);
    if (*attn_cmd) return cmd_attn_dump(g, attn);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
