// phaseforge: dataset generation, temporal phase unwrapping, DL-TPU training
// and evaluation sweeps.
//
// Exit codes: 0 ok, 2 configuration, 3 I/O, 4 frequency mismatch,
// 5 missing checkpoint.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phaseforge/dataset.hpp"
#include "phaseforge/dltpu.hpp"
#include "phaseforge/error.hpp"
#include "phaseforge/eval.hpp"
#include "phaseforge/parallel.hpp"
#include "phaseforge/pud.hpp"
#include "phaseforge/tpu.hpp"

namespace fs = std::filesystem;
using namespace phaseforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitFrequency = 4;
constexpr int kExitCheckpoint = 5;

int exit_code(Errc code) {
  switch (code) {
    case Errc::Config:
    case Errc::OutOfRange:
    case Errc::PhaseOutOfRange:
      return kExitConfig;
    case Errc::FrequencyMismatch:
    case Errc::FrequencyOrder:
      return kExitFrequency;
    case Errc::MissingCheckpoint:
      return kExitCheckpoint;
    default:
      return kExitIo;
  }
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(Errc::Config, "bad " + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw Error(Errc::Config, what + " is empty");
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    throw Error(Errc::Io, path.string() + " exists; pass --force to overwrite");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
  return v;
}

std::string trim(const std::string& v) {
  const auto b = v.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return v.substr(b, v.find_last_not_of(" \t\r") - b + 1);
}

// Flat key=value file as --key=value tokens. Blank lines and # comments are
// skipped.
std::vector<std::string> config_tokens(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Config, "cannot read config " + path.string());
  std::vector<std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw Error(Errc::Config, path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key == "config") throw Error(Errc::Config, "config files cannot include other config files");
    out.push_back("--" + key + "=" + unquote(trim(line.substr(eq + 1))));
  }
  return out;
}

// Replaces every --config FILE (or --config=FILE) with the file's entries so
// flags given after it take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> out;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    std::string file;
    if (arg == "--config") {
      if (i + 1 >= argc) throw Error(Errc::Config, "--config needs a file");
      file = argv[++i];
    } else if (arg.rfind("--config=", 0) == 0) {
      file = arg.substr(9);
    } else {
      out.push_back(arg);
      continue;
    }
    const std::vector<std::string> tokens = config_tokens(file);
    out.insert(out.end(), tokens.begin(), tokens.end());
  }
  return out;
}

void echo_config(const CLI::App* sub) {
  std::cout << "# " << sub->get_name() << " config\n";
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (opt->get_lnames().empty() || name == "help" || name == "help-all" || name == "config") continue;
    std::string value = opt->get_default_str();
    if (opt->get_type_size() == 0) {
      value = opt->count() > 0 && opt->as<bool>() ? "true" : "false";
    } else if (opt->count() > 0) {
      value = opt->results().back();
    }
    std::cout << name << "=" << value << "\n";
  }
  std::cout << std::flush;
}

struct Common {
  std::string config;
  int threads = 0;
  bool force = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Flat key=value config file; later flags override it");
  sub->add_option("--threads", c.threads, "Worker threads (0: PHASEFORGE_THREADS or 1)")->capture_default_str();
  sub->add_flag("--force", c.force, "Overwrite existing outputs")->capture_default_str();
}

struct GenerateArgs {
  Common common;
  int scenes = 200;
  std::string freqs = "1,8,16,32,48,64";
  std::string out;
  int size = 128;
  std::uint64_t seed = 0;
  double kappa = 5.0;
  double sigma = 0.015;
  double gamma = 1.0;
  double exposure = 1.0;
  int quantize = 8;
  double train_fraction = 0.8;
  double threshold = kDefaultModulationThreshold;
};

int run_generate(const GenerateArgs& a) {
  DatasetConfig cfg;
  cfg.n_scenes = a.scenes;
  cfg.prior.width = cfg.prior.height = a.size;
  cfg.prior.kappa = a.kappa;
  cfg.master_seed = a.seed;
  cfg.train_fraction = a.train_fraction;
  cfg.modulation_threshold = a.threshold;
  cfg.threads = resolve_threads(a.common.threads);
  cfg.force = a.common.force;
  for (int f : parse_int_list(a.freqs, "freqs")) {
    AcquisitionSpec acq;
    acq.frequency = f;
    acq.gamma = a.gamma;
    acq.exposure = a.exposure;
    acq.noise_sigma = a.sigma;
    acq.quantize_bits = a.quantize;
    cfg.acquisitions.push_back(acq);
  }
  const DatasetSummary s = generate_dataset(cfg, a.out);
  std::cout << "wrote " << s.files_written << " files: " << s.n_train << " train, " << s.n_test
            << " test scenes to " << a.out << "\n";
  return kExitOk;
}

struct UnwrapArgs {
  Common common;
  std::string data;
  int scene = 0;
  std::string method = "mftpu";
  int fh = 32;
  int fm = 8;
  std::string checkpoint;
  std::string out;
  bool compensate = false;
  double threshold = kDefaultModulationThreshold;
};

int run_unwrap(const UnwrapArgs& a) {
  if (a.method != "mftpu" && a.method != "mftpu3f" && a.method != "dltpu") {
    throw Error(Errc::Config, "unknown method '" + a.method + "'");
  }
  const Manifest manifest = read_manifest(a.data);
  if (a.scene < 0 || a.scene >= static_cast<int>(manifest.scenes.size())) {
    throw Error(Errc::Config, "scene index " + std::to_string(a.scene) + " outside the dataset");
  }
  const fs::path out = a.out;
  for (const char* name : {"k.pud", "phi_abs.pud", "diagnostics.txt"}) refuse_overwrite(out / name, a.common.force);

  const SceneRecord& rec = manifest.scenes[static_cast<std::size_t>(a.scene)];
  const SceneInputs s = load_scene(a.data, manifest, rec, a.fh, a.threshold);
  FringeOrderMap orders;
  PhaseMap<double> absolute;
  std::size_t clamped = 0;
  if (a.method == "mftpu") {
    UnwrapResult<double> r = unwrap_two_freq(s.inputs.Phi_1, s.inputs.phi_h, s.inputs.mask);
    orders = std::move(r.orders);
    absolute = std::move(r.absolute);
    clamped = r.clamped;
  } else if (a.method == "mftpu3f") {
    const int mid = std::min(a.fm, a.fh);
    if (!manifest.has_frequency(mid)) {
      throw Error(Errc::DatasetMissingFrequency, "dataset lacks the mid frequency f=" + std::to_string(mid));
    }
    const PhaseMap<double> phi_mid =
        retrieve_phase(load_stack(scene_dir(a.data, rec), scene_acquisition(manifest.acquisition(mid), rec.seed)));
    UnwrapResult<double> r = unwrap_hierarchical(s.inputs.Phi_1, phi_mid, s.inputs.phi_h, s.inputs.mask);
    orders = std::move(r.orders);
    absolute = std::move(r.absolute);
    clamped = r.clamped;
  } else {
    if (a.checkpoint.empty()) throw Error(Errc::MissingCheckpoint, "dltpu needs --checkpoint");
    auto model = dltpu::DlTpuModel<float>::from_checkpoint(nn::read_checkpoint(a.checkpoint));
    dltpu::Prediction p = dltpu::infer(model, s.inputs.Phi_1, s.inputs.phi_h, s.inputs.mask);
    orders = std::move(p.orders);
    absolute = std::move(p.absolute);
  }
  std::size_t changed = 0;
  if (a.compensate) {
    const OrderGrid before = orders.k;
    orders = compensate_orders(orders);
    changed = static_cast<std::size_t>((before != orders.k).count());
    for (Eigen::Index i = 0; i < absolute.values.size(); ++i) {
      if (orders.mask.data()[i]) {
        absolute.values.data()[i] = s.inputs.phi_h.values.data()[i] + 2 * std::numbers::pi * orders.k.data()[i];
      }
    }
  }

  fs::create_directories(out);
  write_pud(out / "k.pud", make_pud(orders.k));
  write_pud(out / "phi_abs.pud", make_pud(std::vector<Grid<double>>{absolute.values}, PudType::float32));
  eval::Tally t;
  t.add(orders.k, s.k_ref, absolute, s.Phi_ref, s.mask);
  std::ostringstream d;
  d << "method=" << a.method << "\nf_h=" << a.fh << "\nscene=" << a.scene << "\nsplit=" << rec.split
    << "\nvalid_pixels=" << s.inputs.mask.count() << "\nevaluated_pixels=" << t.valid
    << "\nclamped=" << clamped << "\ncompensated=" << changed << "\nerror_rate=" << t.error_rate()
    << "\nsigma_dphi=" << t.sigma() << "\n";
  write_text(out / "diagnostics.txt", d.str());
  std::cout << d.str();
  return kExitOk;
}

struct TrainArgs {
  Common common;
  dltpu::TrainConfig cfg;
  std::string data;
  std::string checkpoint;
  std::string log;
};

int run_train(TrainArgs& a) {
  a.cfg.dataset = a.data;
  a.cfg.checkpoint = a.checkpoint;
  const fs::path log = a.log.empty() ? fs::path(a.checkpoint + ".csv") : fs::path(a.log);
  refuse_overwrite(a.cfg.checkpoint, a.common.force);
  refuse_overwrite(log, a.common.force);
  const dltpu::TrainResult r = dltpu::train_on_dataset(
      a.cfg,
      [](const dltpu::EpochLog& e) {
        std::printf("epoch %d train_loss %.6f test_error_rate %.6f\n", e.epoch, e.train_loss, e.test_error_rate);
        std::fflush(stdout);
      },
      resolve_threads(a.common.threads));
  write_text(log, dltpu::log_csv(r.log));
  std::cout << "checkpoint " << a.checkpoint << "\nlog " << log.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  Common common;
  std::string data;
  std::string method = "mftpu";
  int fh = 32;
  int fm = 8;
  std::string checkpoint;
  std::string out;
  double threshold = kDefaultModulationThreshold;
};

int run_eval(const EvalArgs& a) {
  if (!a.out.empty()) refuse_overwrite(a.out, a.common.force);
  const eval::MetricsRecord r = eval::evaluate_dataset(a.data, a.method, a.fh, a.fm, a.checkpoint, a.threshold,
                                                       resolve_threads(a.common.threads));
  const std::string csv = eval::to_csv({r});
  if (!a.out.empty()) write_text(a.out, csv);
  std::cout << csv;
  return kExitOk;
}

struct SweepArgs {
  Common common;
  std::string data;
  std::string kind = "frequency";
  std::string methods = "mftpu";
  int fh = 32;
  int fm = 8;
  std::string checkpoint_dir;
  std::string out;
};

int run_sweep(const SweepArgs& a) {
  refuse_overwrite(a.out, a.common.force);
  eval::SweepConfig cfg = eval::sweep_from_manifest(read_manifest(a.data));
  cfg.kind = eval::parse_sweep_kind(a.kind);
  cfg.methods = split_list(a.methods);
  if (cfg.methods.empty()) throw Error(Errc::Config, "no methods given");
  cfg.f_h = a.fh;
  cfg.f_mid = a.fm;
  cfg.threads = resolve_threads(a.common.threads);
  if (!a.checkpoint_dir.empty()) {
    for (int f = 2; f <= 256; ++f) {
      const fs::path p = fs::path(a.checkpoint_dir) / ("dltpu_f" + std::to_string(f) + ".puw");
      if (fs::exists(p)) cfg.checkpoints[f] = p;
    }
  }
  const std::vector<eval::MetricsRecord> records = eval::run_sweep(cfg);
  const std::string csv = eval::to_csv(records);
  write_text(a.out, csv);
  std::cout << csv;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fringe-projection phase unwrapping toolkit"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  GenerateArgs gen;
  CLI::App* g = app.add_subcommand("generate", "Render a synthetic dataset");
  add_common(g, gen.common);
  g->add_option("--scenes", gen.scenes, "Number of scenes")->capture_default_str();
  g->add_option("--freqs", gen.freqs, "Comma-separated fringe frequencies, must include 1")->capture_default_str();
  g->add_option("--out", gen.out, "Dataset root")->required();
  g->add_option("--size", gen.size, "Image width and height")->capture_default_str();
  g->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  g->add_option("--kappa", gen.kappa, "Height-to-disparity factor")->capture_default_str();
  g->add_option("--sigma", gen.sigma, "Sensor noise std")->capture_default_str();
  g->add_option("--gamma", gen.gamma, "Projector gamma")->capture_default_str();
  g->add_option("--exposure", gen.exposure, "Relative exposure")->capture_default_str();
  g->add_option("--quantize", gen.quantize, "Camera bits, 0 or 8")->capture_default_str();
  g->add_option("--train-fraction", gen.train_fraction, "Share of scenes in the train split")->capture_default_str();
  g->add_option("--threshold", gen.threshold, "Modulation threshold for the stored mask")->capture_default_str();

  UnwrapArgs un;
  CLI::App* u = app.add_subcommand("unwrap", "Unwrap one stored scene");
  add_common(u, un.common);
  u->add_option("--data", un.data, "Dataset root")->required();
  u->add_option("--scene", un.scene, "Scene index")->capture_default_str();
  u->add_option("--method", un.method, "mftpu, mftpu3f or dltpu")->capture_default_str();
  u->add_option("--fh", un.fh, "High frequency")->capture_default_str();
  u->add_option("--fm", un.fm, "Mid frequency for mftpu3f")->capture_default_str();
  u->add_option("--checkpoint", un.checkpoint, "DL-TPU checkpoint");
  u->add_option("--out", un.out, "Output directory")->required();
  u->add_flag("--compensate", un.compensate, "Majority-vote order compensation");
  u->add_option("--threshold", un.threshold, "Modulation threshold")->capture_default_str();

  TrainArgs tr;
  CLI::App* t = app.add_subcommand("train", "Train a DL-TPU model");
  add_common(t, tr.common);
  t->add_option("--data", tr.data, "Dataset root")->required();
  t->add_option("--fh", tr.cfg.f_h, "High frequency")->capture_default_str();
  t->add_option("--epochs", tr.cfg.epochs, "Epochs")->capture_default_str();
  t->add_option("--lr", tr.cfg.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--final-lr-fraction", tr.cfg.final_lr_fraction, "Cosine decay floor")->capture_default_str();
  t->add_option("--seed", tr.cfg.seed, "Initialisation and shuffling seed")->capture_default_str();
  t->add_option("--patch", tr.cfg.patch, "Crop size, even")->capture_default_str();
  t->add_option("--batch", tr.cfg.batch, "Crops per optimizer step")->capture_default_str();
  t->add_option("--samples-per-epoch", tr.cfg.samples_per_epoch, "Crops per epoch, 0 = training images")
      ->capture_default_str();
  t->add_option("--threshold", tr.cfg.modulation_threshold, "Modulation threshold")->capture_default_str();
  t->add_option("--checkpoint", tr.checkpoint, "Output checkpoint")->required();
  t->add_option("--log", tr.log, "Training log CSV (default: <checkpoint>.csv)");

  EvalArgs ev;
  CLI::App* e = app.add_subcommand("eval", "Evaluate one method on the test split");
  add_common(e, ev.common);
  e->add_option("--data", ev.data, "Dataset root")->required();
  e->add_option("--method", ev.method, "mftpu, mftpu3f or dltpu")->capture_default_str();
  e->add_option("--fh", ev.fh, "High frequency")->capture_default_str();
  e->add_option("--fm", ev.fm, "Mid frequency for mftpu3f")->capture_default_str();
  e->add_option("--checkpoint", ev.checkpoint, "DL-TPU checkpoint");
  e->add_option("--threshold", ev.threshold, "Modulation threshold")->capture_default_str();
  e->add_option("--out", ev.out, "Metrics CSV");

  SweepArgs sw;
  CLI::App* s = app.add_subcommand("sweep", "Re-render the test scenes across a sweep");
  add_common(s, sw.common);
  s->add_option("--data", sw.data, "Dataset root")->required();
  s->add_option("--kind", sw.kind, "frequency, exposure, gamma or noise")->capture_default_str();
  s->add_option("--methods", sw.methods, "Comma-separated methods")->capture_default_str();
  s->add_option("--fh", sw.fh, "High frequency for non-frequency sweeps")->capture_default_str();
  s->add_option("--fm", sw.fm, "Mid frequency for mftpu3f")->capture_default_str();
  s->add_option("--checkpoint-dir", sw.checkpoint_dir, "Directory holding dltpu_f<fh>.puw");
  s->add_option("--out", sw.out, "Sweep CSV")->required();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConfig;
  }
  std::reverse(args.begin(), args.end());

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << err.what() << "\n\n";
    const CLI::App* failed = &app;
    for (CLI::App* sub : app.get_subcommands()) failed = sub;
    std::cerr << failed->help();
    return kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    echo_config(sub);
    if (sub == g) return run_generate(gen);
    if (sub == u) return run_unwrap(un);
    if (sub == t) return run_train(tr);
    if (sub == e) return run_eval(ev);
    return run_sweep(sw);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err.code());
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitIo;
  }
}
