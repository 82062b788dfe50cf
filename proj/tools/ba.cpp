// ba: synthetic data, inference, training and evaluation from the shell.

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "ba/data.hpp"
#include "ba/eval.hpp"
#include "ba/field_io.hpp"
#include "ba/imageio.hpp"
#include "ba/net.hpp"
#include "ba/pipeline.hpp"
#include "ba/refine.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ba;

namespace {

/// Bad invocation: reported with exit status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string config;
  int threads = 0;
  bool deterministic = false;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int default_threads() {
  if (const char* env = std::getenv("BA_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("BA_THREADS must be a positive integer, got '") + env + "'");
  }
  return omp_get_max_threads();
}

json versions() {
  return {{"ba", BA_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                       "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

// Every command runs from a resolved parameter object, so `replay` goes
// through exactly the same path as the original invocation.
using Command = void (*)(const json& params, const Globals& g);

void write_manifest(const std::string& command, const json& params, const Globals& g) {
  fs::create_directories(g.out);
  write_json(fs::path(g.out) / "manifest.json", {{"command", command},
                                                  {"params", params},
                                                  {"seed", g.seed},
                                                  {"threads", g.threads},
                                                  {"deterministic", g.deterministic},
                                                  {"versions", versions()}});
}

ImageF load_input(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("input image not found: " + path);
  return io::read_image(path);
}

Map pow_map(const Map& m, double gamma) {
  Map out = m;
  for (double& v : out.data()) v = std::pow(std::max(v, 0.0), gamma);
  return out;
}

void write_maps(const fs::path& dir, const std::string& prefix, const Inference& r, double gamma_vis) {
  io::write_pgm((dir / (prefix + "boundary.pgm")).string(), pow_map(r.maps.boundary, gamma_vis));
  io::write_pfm((dir / (prefix + "boundary.pfm")).string(), r.maps.boundary);
  io::write_pfm((dir / (prefix + "distance.pfm")).string(), r.maps.distance);
  io::write_pnm((dir / (prefix + "features.ppm")).string(), r.maps.features);
  write_field((dir / (prefix + "field.bin")).string(), r.field);
}

// --- synth -----------------------------------------------------------------

void run_synth(const json& p, const Globals& g) {
  const int stage = p.at("stage").get<int>();
  StageOptions opt = stage_defaults(stage);
  const json& o = p.at("options");
  opt.noise_min = o.at("noise_min").get<double>();
  opt.noise_max = o.at("noise_max").get<double>();
  opt.perlin_probability = o.at("perlin_probability").get<double>();
  opt.gray_probability = o.at("gray_probability").get<double>();
  const auto samples = generate_dataset(stage, p.at("count").get<std::size_t>(), g.seed, opt);
  write_dataset(g.out, samples, stage, g.seed);
  std::cerr << "wrote " << samples.size() << " samples to " << g.out << '\n';
}

// --- infer -----------------------------------------------------------------

void infer_one(const json& p, const ImageF& image, const fs::path& dir, const std::string& prefix,
               std::optional<ModelWeights>& weights) {
  const double gamma_vis = p.at("gamma_vis").get<double>();
  const int evolution = p.at("evolution").get<int>();
  const std::string mode = p.at("mode").get<std::string>();
  Inference r;
  if (mode == "net") {
    const int min_side = weights->config.min_input();
    if (image.width() < min_side || image.height() < min_side)
      throw UsageError("net mode needs at least " + std::to_string(min_side) + "x" + std::to_string(min_side) +
                       " pixels, got " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
    std::vector<RawField> iters;
    r = infer_net(*weights, image, evolution > 0 ? &iters : nullptr);
    for (std::size_t i = 0; i < iters.size(); ++i) {
      const fs::path evo = dir / "evolution";
      fs::create_directories(evo);
      char name[32];
      std::snprintf(name, sizeof name, "%siter%02zu_", prefix.c_str(), i + 1);
      write_maps(evo, name, {iters[i], compute_global_maps(to_rgb(image), decode_field(iters[i]))}, gamma_vis);
    }
  } else {
    const RefineConfig cfg = refine_config_from_json(p.at("refine"));
    RefineObserver obs;
    if (evolution > 0) {
      fs::create_directories(dir / "evolution");
      obs = [&](int step, const RawField& raw) {
        if (step % evolution != 0) return;
        char name[32];
        std::snprintf(name, sizeof name, "%sstep%05d_", prefix.c_str(), step);
        write_maps(dir / "evolution", name, {raw, compute_global_maps(image, decode_field(raw))}, gamma_vis);
      };
    }
    r = infer_variational(image, cfg, obs);
  }
  write_maps(dir, prefix, r, gamma_vis);
}

void run_infer(const json& p, const Globals& g) {
  const std::string mode = p.at("mode").get<std::string>();
  if (mode != "variational" && mode != "net") throw UsageError("mode must be 'variational' or 'net'");
  std::optional<ModelWeights> weights;
  if (mode == "net") {
    const std::string wp = p.value("weights", "");
    if (wp.empty()) throw UsageError("net mode requires --weights");
    if (!fs::exists(wp)) throw UsageError("weights file not found: " + wp);
    weights = load_weights(wp);
  }
  const std::string input = p.value("input", "");
  const std::string dataset = p.value("dataset", "");
  if (input.empty() == dataset.empty()) throw UsageError("give exactly one of an input image or --dataset");
  fs::create_directories(g.out);
  if (!input.empty()) {
    infer_one(p, load_input(input), g.out, "", weights);
    return;
  }
  const Dataset ds = read_dataset(dataset);
  const std::string split = p.at("split").get<std::string>();
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    if (split != "all" && ds.entries[i].split != split) continue;
    infer_one(p, ds.load(i).input, g.out, ds.entries[i].id + "_", weights);
  }
}

// --- probe -----------------------------------------------------------------

void run_probe(const json& p, const Globals& g) {
  const RawField raw = read_field(p.at("field").get<std::string>());
  const ImageF image = load_input(p.at("image").get<std::string>());
  const int x = p.at("x").get<int>(), y = p.at("y").get<int>();
  if (image.height() != raw.height || image.width() != raw.width)
    throw UsageError("field and image sizes differ");
  if (x < 0 || y < 0 || x >= raw.width || y >= raw.height)
    throw UsageError("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") is outside the " +
                     std::to_string(raw.width) + "x" + std::to_string(raw.height) + " field");
  const JunctionField field = decode_field(raw);
  const AffinityKernel k = affinity_map(field, gather(image, field), x, y);
  fs::create_directories(g.out);
  io::write_pfm((fs::path(g.out) / "kernel.pfm").string(), k.weights);
  double sum = 0.0;
  for (double v : k.weights.data()) sum += v;
  const auto applied = apply_kernel(k, image);
  write_json(fs::path(g.out) / "kernel.json", {{"x", x}, {"y", y}, {"sum", sum}, {"applied", applied}});
}

// --- train -----------------------------------------------------------------

void run_train(const json& p, const Globals& g) {
  const TrainConfig tc = train_config_from_json(p.at("train"));
  const LossConfig lc = loss_config_from_json(p.at("loss"));
  const ModelConfig mc = model_config_from_json(p.at("model"));
  const std::string ckpt = (fs::path(g.out) / "checkpoint.bin").string();

  SampleSource source;
  const std::string data = p.value("data", "");
  if (!data.empty()) {
    auto ds = std::make_shared<Dataset>(read_dataset(data));
    if (ds->stage != tc.stage)
      throw UsageError("dataset " + data + " holds stage " + std::to_string(ds->stage) + " samples, config asks for stage " +
                       std::to_string(tc.stage));
    auto idx = std::make_shared<std::vector<std::size_t>>(ds->split_indices("train"));
    if (idx->empty()) throw UsageError("dataset " + data + " has no training samples");
    source = [ds, idx](std::size_t i) { return ds->load((*idx)[i % idx->size()]); };
  } else {
    source = generated_source(tc.stage, tc.seed);
  }

  TrainState state;
  if (p.at("resume").get<bool>()) {
    if (!fs::exists(ckpt)) throw UsageError("nothing to resume: " + ckpt + " does not exist");
    state = load_checkpoint(ckpt);
    std::cerr << "resuming at step " << state.step << '\n';
  } else {
    state = initial_state(mc, tc.seed);
  }
  std::cerr << "parameters: " << param_count(state.weights) << '\n';
  for (const auto& [name, n] : param_breakdown(state.weights)) std::cerr << "  " << name << ' ' << n << '\n';

  train(state, tc, lc, source, g.out, [&](const StepReport& r) {
    if (r.step % 10 == 0 || r.step == tc.steps) std::cerr << "step " << r.step << " loss " << r.loss << '\n';
  });
  save_weights((fs::path(g.out) / "weights.bin").string(), state.weights, {{"step", state.step}});
}

// --- eval ------------------------------------------------------------------

void run_eval(const json& p, const Globals& g) {
  const EvalConfig cfg = eval_config_from_json(p.at("eval"));
  const Dataset ds = read_dataset(p.at("gt").get<std::string>());
  const fs::path pred_dir = p.at("pred").get<std::string>();
  if (!fs::is_directory(pred_dir)) throw UsageError("prediction directory not found: " + pred_dir.string());
  const std::string split = p.at("split").get<std::string>();

  std::vector<Map> preds;
  std::vector<BinaryMap> gts;
  std::vector<ImageF> inputs;
  std::vector<double> levels;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    const auto& e = ds.entries[i];
    if (split != "all" && e.split != split) continue;
    const Sample s = ds.load(i);
    const fs::path f = pred_dir / (e.id + "_boundary.pfm");
    if (fs::exists(f)) {
      preds.push_back(io::read_pfm(f.string()));
    } else {
      ++missing;
      preds.emplace_back(s.distance.height(), s.distance.width(), 1, 0.0);
    }
    gts.push_back(boundary_from_distance(s.distance));
    inputs.push_back(s.input);
    levels.push_back(e.meta.contains("noise") ? e.meta["noise"].value("level", 0.0) : 0.0);
  }
  if (missing == preds.size())
    std::cerr << "warning: no predictions found in " << pred_dir << "; scoring empty maps\n";
  else if (missing > 0)
    std::cerr << "warning: " << missing << " predictions missing; scored as empty maps\n";

  const OdsResult all = ods_fscore(preds, gts, cfg);
  json report = {{"samples", preds.size()}, {"missing", missing}, {"ods", to_json(all)}};

  // Noise levels are continuous; group them on a 0.01 grid.
  std::map<long, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < levels.size(); ++i) groups[std::lround(levels[i] * 100.0)].push_back(i);
  report["by_noise"] = json::array();
  for (const auto& [bin, members] : groups) {
    std::vector<Map> gp;
    std::vector<BinaryMap> gg;
    for (std::size_t i : members) {
      gp.push_back(preds[i]);
      gg.push_back(gts[i]);
    }
    const OdsResult r = ods_fscore(gp, gg, cfg);
    report["by_noise"].push_back({{"level", bin / 100.0}, {"samples", members.size()}, {"f", r.f},
                                  {"precision", r.precision}, {"recall", r.recall}, {"threshold", r.threshold}});
  }

  fs::create_directories(g.out);
  std::vector<std::pair<std::string, OdsResult>> curves{{"prediction", all}};
  if (p.at("canny").get<bool>() && !preds.empty()) {
    double sigma = 0.0;
    const OdsResult c = canny_best(inputs, gts, p.at("canny_sigmas").get<std::vector<double>>(), cfg, &sigma);
    report["canny"] = to_json(c);
    report["canny"]["sigma"] = sigma;
    curves.emplace_back("canny", c);
    write_curve_csv((fs::path(g.out) / "canny_curve.csv").string(), c);
  }
  write_curve_csv((fs::path(g.out) / "curve.csv").string(), all);
  write_pr_svg((fs::path(g.out) / "pr.svg").string(), curves);
  write_json(fs::path(g.out) / "report.json", report);
  std::printf("ODS F %.4f  P %.4f  R %.4f  t %.3f\n", all.f, all.precision, all.recall, all.threshold);
}

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> m{{"synth", run_synth}, {"infer", run_infer}, {"probe", run_probe},
                                                {"train", run_train}, {"eval", run_eval}};
  return m;
}

void execute(const std::string& name, json params, const Globals& g) {
  if (!g.config.empty()) params.merge_patch(read_json(g.config));
  write_manifest(name, params, g);
  commands().at(name)(params, g);
}

void run_replay(const std::string& manifest_path, Globals g) {
  const json m = read_json(manifest_path);
  if (!m.contains("command") || !m.contains("params")) throw UsageError(manifest_path + " is not a run manifest");
  const std::string name = m.at("command").get<std::string>();
  if (!commands().count(name)) throw UsageError("unknown command in manifest: " + name);
  g.seed = m.value("seed", std::uint64_t{0});
  g.deterministic = m.value("deterministic", false);
  g.config.clear();
  execute(name, m.at("params"), g);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary attention: synthetic data, inference, training and evaluation"};
  app.require_subcommand(1);
  Globals g;
  std::string threads_opt;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--config", g.config, "JSON file merged into the command's parameters");
  app.add_option("--threads", g.threads, "Worker threads (default: BA_THREADS or all cores)")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", g.deterministic, "Static scheduling; outputs independent of thread count");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  int stage = 1;
  std::size_t count = 100;
  synth->add_option("--stage", stage, "Curriculum stage (1: 21x21, 2: 100x100, 3: 125x125)")
      ->check(CLI::Range(1, 3))
      ->capture_default_str();
  synth->add_option("--count", count, "Number of samples")->capture_default_str();

  auto* infer = app.add_subcommand("infer", "Estimate boundaries of an image");
  std::string input, dataset, mode = "variational", weights, split = "validation";
  int evolution = 0;
  double gamma_vis = 0.5;
  infer->add_option("input", input, "PPM/PGM/PFM image");
  infer->add_option("--dataset", dataset, "Process a dataset split instead of one image");
  infer->add_option("--split", split, "Dataset split: train, validation or all")->capture_default_str();
  infer->add_option("--mode", mode, "variational or net")->check(CLI::IsMember({"variational", "net"}))->capture_default_str();
  infer->add_option("--weights", weights, "Network weights (net mode)");
  infer->add_option("--evolution", evolution, "Write maps every N refinement steps (net: every iteration)")
      ->check(CLI::NonNegativeNumber);
  infer->add_option("--gamma-vis", gamma_vis, "Exponent applied to the boundary PGM")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* probe = app.add_subcommand("probe", "Affinity kernel of one pixel");
  std::string field_path, image_path;
  int px = 0, py = 0;
  probe->add_option("field", field_path, "Field file from infer")->required();
  probe->add_option("image", image_path, "Image the field was fitted to")->required();
  probe->add_option("x", px)->required();
  probe->add_option("y", py)->required();

  auto* trainc = app.add_subcommand("train", "Train the network");
  std::string data;
  bool resume = false;
  trainc->add_option("--data", data, "Dataset directory (default: freshly generated samples)");
  trainc->add_option("--stage", stage, "Curriculum stage")->check(CLI::Range(1, 3));
  trainc->add_flag("--resume", resume, "Continue from <out>/checkpoint.bin");

  auto* evalc = app.add_subcommand("eval", "Score predicted boundary maps against a dataset");
  std::string pred, gt;
  bool with_canny = false;
  evalc->add_option("pred", pred, "Directory of <id>_boundary.pfm maps")->required();
  evalc->add_option("gt", gt, "Dataset directory")->required();
  evalc->add_option("--split", split, "Dataset split: train, validation or all")->capture_default_str();
  evalc->add_flag("--canny", with_canny, "Also score the Canny baseline");

  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  std::string manifest;
  replay->add_option("manifest", manifest, "manifest.json of an earlier run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (g.threads == 0) g.threads = default_threads();
    omp_set_num_threads(g.threads);
    if (g.deterministic) omp_set_dynamic(0);

    if (*replay) {
      run_replay(manifest, g);
    } else if (*synth) {
      const StageOptions o = stage_defaults(stage);
      execute("synth",
              {{"stage", stage},
               {"count", count},
               {"options",
                {{"noise_min", o.noise_min},
                 {"noise_max", o.noise_max},
                 {"perlin_probability", o.perlin_probability},
                 {"gray_probability", o.gray_probability}}}},
              g);
    } else if (*infer) {
      execute("infer",
              {{"input", input},
               {"dataset", dataset},
               {"split", split},
               {"mode", mode},
               {"weights", weights},
               {"evolution", evolution},
               {"gamma_vis", gamma_vis},
               {"refine", to_json(RefineConfig{})}},
              g);
    } else if (*probe) {
      execute("probe", {{"field", field_path}, {"image", image_path}, {"x", px}, {"y", py}}, g);
    } else if (*trainc) {
      TrainConfig tc;
      tc.stage = stage;
      tc.seed = g.seed;
      execute("train",
              {{"data", data},
               {"resume", resume},
               {"train", to_json(tc)},
               {"loss", to_json(LossConfig{})},
               {"model", to_json(ModelConfig{})}},
              g);
    } else if (*evalc) {
      execute("eval",
              {{"pred", pred},
               {"gt", gt},
               {"split", split},
               {"eval", to_json(EvalConfig{})},
               {"canny", with_canny},
               {"canny_sigmas", {1.0, 1.5, 2.0, 3.0}}},
              g);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
