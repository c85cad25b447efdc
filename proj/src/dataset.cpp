#include "phaseforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "phaseforge/error.hpp"
#include "phaseforge/parallel.hpp"
#include "phaseforge/pud.hpp"

namespace phaseforge {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string acq_key(int f, const char* field) { return "acq.f" + std::to_string(f) + "." + field; }

const std::string& lookup(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw Error(Errc::Io, "manifest lacks '" + key + "'");
  return it->second;
}

double lookup_double(const std::map<std::string, std::string>& m, const std::string& key) {
  try {
    return std::stod(lookup(m, key));
  } catch (const std::logic_error&) {
    throw Error(Errc::Io, "manifest value for '" + key + "' is not a number");
  }
}

std::uint64_t lookup_u64(const std::map<std::string, std::string>& m, const std::string& key) {
  try {
    return std::stoull(lookup(m, key));
  } catch (const std::logic_error&) {
    throw Error(Errc::Io, "manifest value for '" + key + "' is not an integer");
  }
}

int n_train_for(int n_scenes, double fraction) {
  return std::clamp(static_cast<int>(std::lround(n_scenes * fraction)), 0, n_scenes);
}

void check_config(const DatasetConfig& cfg) {
  if (cfg.n_scenes < 1) throw Error(Errc::Config, "n_scenes must be >= 1");
  if (!(cfg.train_fraction >= 0 && cfg.train_fraction <= 1)) {
    throw Error(Errc::Config, "train_fraction must lie in [0, 1]");
  }
  bool unit = false, high = false;
  for (const AcquisitionSpec& a : cfg.acquisitions) {
    a.validate();
    unit = unit || a.frequency == 1;
    high = high || a.frequency > 1;
  }
  if (!unit) throw Error(Errc::Config, "acquisition list must contain the unit frequency f=1");
  if (!high) throw Error(Errc::Config, "acquisition list needs at least one frequency above 1");
  for (std::size_t i = 0; i < cfg.acquisitions.size(); ++i) {
    for (std::size_t j = i + 1; j < cfg.acquisitions.size(); ++j) {
      if (cfg.acquisitions[i].frequency == cfg.acquisitions[j].frequency) {
        throw Error(Errc::Config, "duplicate frequency in acquisition list");
      }
    }
  }
}

void write_file(const fs::path& path, const PudArray& array, std::size_t& count) {
  write_pud(path, array);
  ++count;
}

}  // namespace

const AcquisitionSpec& Manifest::acquisition(int f) const {
  for (const AcquisitionSpec& a : acquisitions) {
    if (a.frequency == f) return a;
  }
  throw Error(Errc::DatasetMissingFrequency, "dataset has no f=" + std::to_string(f) + " patterns");
}

bool Manifest::has_frequency(int f) const {
  return std::any_of(acquisitions.begin(), acquisitions.end(),
                     [f](const AcquisitionSpec& a) { return a.frequency == f; });
}

AcquisitionSpec scene_acquisition(const AcquisitionSpec& base, std::uint64_t scene_seed) {
  AcquisitionSpec a = base;
  a.seed = derive_seed(scene_seed, static_cast<std::uint64_t>(base.frequency));
  return a;
}

std::uint64_t scene_seed(std::uint64_t master_seed, int index) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(index) + 1);
}

std::string stack_name(int f, int n) {
  return "I_f" + std::to_string(f) + "_n" + std::to_string(n);
}

fs::path scene_dir(const fs::path& root, const SceneRecord& scene) {
  return root / scene.split / std::to_string(scene.index);
}

std::string manifest_text(const DatasetConfig& cfg) {
  const int n_train = n_train_for(cfg.n_scenes, cfg.train_fraction);
  std::ostringstream out;
  out << "format=PUD1\n";
  out << "master_seed=" << cfg.master_seed << "\n";
  out << "n_scenes=" << cfg.n_scenes << "\n";
  out << "n_train=" << n_train << "\n";
  out << "n_test=" << cfg.n_scenes - n_train << "\n";
  out << "train_fraction=" << fmt_double(cfg.train_fraction) << "\n";
  out << "modulation_threshold=" << fmt_double(cfg.modulation_threshold) << "\n";
  const ScenePrior& p = cfg.prior;
  out << "width=" << p.width << "\n";
  out << "height=" << p.height << "\n";
  out << "prior.kappa=" << fmt_double(p.kappa) << "\n";
  out << "prior.min_bumps=" << p.min_bumps << "\n";
  out << "prior.max_bumps=" << p.max_bumps << "\n";
  out << "prior.max_disparity_px=" << fmt_double(p.max_disparity_px) << "\n";
  out << "prior.texture_fraction=" << fmt_double(p.texture_fraction) << "\n";
  out << "prior.reflectivity_min=" << fmt_double(p.reflectivity_min) << "\n";
  out << "prior.reflectivity_max=" << fmt_double(p.reflectivity_max) << "\n";
  out << "prior.max_dark_patches=" << p.max_dark_patches << "\n";
  out << "prior.ambient_max=" << fmt_double(p.ambient_max) << "\n";
  out << "frequencies=";
  for (std::size_t i = 0; i < cfg.acquisitions.size(); ++i) {
    out << (i ? "," : "") << cfg.acquisitions[i].frequency;
  }
  out << "\n";
  for (const AcquisitionSpec& a : cfg.acquisitions) {
    out << acq_key(a.frequency, "gamma") << "=" << fmt_double(a.gamma) << "\n";
    out << acq_key(a.frequency, "exposure") << "=" << fmt_double(a.exposure) << "\n";
    out << acq_key(a.frequency, "noise_sigma") << "=" << fmt_double(a.noise_sigma) << "\n";
    out << acq_key(a.frequency, "quantize_bits") << "=" << a.quantize_bits << "\n";
  }
  for (int i = 0; i < cfg.n_scenes; ++i) {
    const std::uint64_t seed = scene_seed(cfg.master_seed, i);
    out << "scene." << i << ".split=" << (i < n_train ? "train" : "test") << "\n";
    out << "scene." << i << ".seed=" << seed << "\n";
    for (const AcquisitionSpec& a : cfg.acquisitions) {
      out << "scene." << i << ".acq.f" << a.frequency << ".seed=" << scene_acquisition(a, seed).seed << "\n";
    }
  }
  return out.str();
}

DatasetSummary generate_dataset(const DatasetConfig& cfg, const fs::path& root) {
  check_config(cfg);
  std::error_code ec;
  if (fs::exists(root / "manifest.txt") && !cfg.force) {
    throw Error(Errc::Io, root.string() + " already holds a dataset (use --force to overwrite)");
  }
  if (cfg.force) {
    fs::remove_all(root / "train", ec);
    fs::remove_all(root / "test", ec);
  }
  fs::create_directories(root, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + root.string() + ": " + ec.message());

  const int n_train = n_train_for(cfg.n_scenes, cfg.train_fraction);
  std::vector<std::size_t> written(static_cast<std::size_t>(cfg.n_scenes), 0);
  parallel_for(static_cast<std::size_t>(cfg.n_scenes), cfg.threads, [&](std::size_t idx) {
    const int i = static_cast<int>(idx);
    const SceneRecord rec{i, i < n_train ? "train" : "test", scene_seed(cfg.master_seed, i)};
    const SceneSpec scene = random_scene(cfg.prior, rec.seed);
    const fs::path dir = scene_dir(root, rec);
    std::error_code dir_ec;
    fs::create_directories(dir, dir_ec);
    if (dir_ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + dir_ec.message());

    std::size_t& count = written[idx];
    Mask valid = Mask::Constant(scene.height(), scene.width(), true);
    for (const AcquisitionSpec& base : cfg.acquisitions) {
      const AcquisitionSpec acq = scene_acquisition(base, rec.seed);
      const FringeStack<double> stack = render_stack(scene, acq);
      for (int n = 0; n < 3; ++n) {
        const PudArray arr = acq.quantize_bits == 8 ? make_pud({stack.images[n] * 255.0}, PudType::uint8)
                                                    : make_pud({stack.images[n]}, PudType::float32);
        write_file(dir / (stack_name(acq.frequency, n) + ".pud"), arr, count);
      }
      valid = valid && modulation(stack, cfg.modulation_threshold).mask;
      const PhaseMap<double> Phi = absolute_phase(scene, acq.frequency);
      write_file(dir / ("phi_abs_f" + std::to_string(acq.frequency) + ".pud"),
                 make_pud({Phi.values}, PudType::float32), count);
      write_file(dir / ("k_f" + std::to_string(acq.frequency) + ".pud"), make_pud(fringe_orders(Phi)), count);
    }
    write_file(dir / "mask.pud", make_pud(valid), count);
  });

  std::ofstream manifest(root / "manifest.txt", std::ios::trunc);
  manifest << manifest_text(cfg);
  if (!manifest) throw Error(Errc::Io, "cannot write manifest in " + root.string());

  DatasetSummary summary{n_train, cfg.n_scenes - n_train, {}, 1};
  for (const AcquisitionSpec& a : cfg.acquisitions) summary.frequencies.push_back(a.frequency);
  for (std::size_t c : written) summary.files_written += c;
  return summary;
}

Manifest read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.txt");
  if (!in) throw Error(Errc::Io, "no manifest.txt in " + root.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::Io, "malformed manifest line: " + line);
    m.entries[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto& e = m.entries;
  m.master_seed = lookup_u64(e, "master_seed");
  m.modulation_threshold = lookup_double(e, "modulation_threshold");
  m.prior.width = static_cast<int>(lookup_u64(e, "width"));
  m.prior.height = static_cast<int>(lookup_u64(e, "height"));
  m.prior.kappa = lookup_double(e, "prior.kappa");
  m.prior.min_bumps = static_cast<int>(lookup_u64(e, "prior.min_bumps"));
  m.prior.max_bumps = static_cast<int>(lookup_u64(e, "prior.max_bumps"));
  m.prior.max_disparity_px = lookup_double(e, "prior.max_disparity_px");
  m.prior.texture_fraction = lookup_double(e, "prior.texture_fraction");
  m.prior.reflectivity_min = lookup_double(e, "prior.reflectivity_min");
  m.prior.reflectivity_max = lookup_double(e, "prior.reflectivity_max");
  m.prior.max_dark_patches = static_cast<int>(lookup_u64(e, "prior.max_dark_patches"));
  m.prior.ambient_max = lookup_double(e, "prior.ambient_max");

  std::stringstream freqs(lookup(e, "frequencies"));
  std::string item;
  while (std::getline(freqs, item, ',')) {
    AcquisitionSpec a;
    a.frequency = std::stoi(item);
    a.gamma = lookup_double(e, acq_key(a.frequency, "gamma"));
    a.exposure = lookup_double(e, acq_key(a.frequency, "exposure"));
    a.noise_sigma = lookup_double(e, acq_key(a.frequency, "noise_sigma"));
    a.quantize_bits = static_cast<int>(lookup_u64(e, acq_key(a.frequency, "quantize_bits")));
    m.acquisitions.push_back(a);
  }
  const int n = static_cast<int>(lookup_u64(e, "n_scenes"));
  for (int i = 0; i < n; ++i) {
    const std::string prefix = "scene." + std::to_string(i) + ".";
    m.scenes.push_back({i, lookup(e, prefix + "split"), lookup_u64(e, prefix + "seed")});
  }
  return m;
}

FringeStack<double> load_stack(const fs::path& dir, const AcquisitionSpec& acq) {
  FringeStack<double> stack;
  stack.acquisition = acq;
  for (int n = 0; n < 3; ++n) {
    const fs::path path = dir / (stack_name(acq.frequency, n) + ".pud");
    if (!fs::exists(path)) {
      throw Error(Errc::DatasetMissingFrequency, "missing " + path.string());
    }
    const PudArray arr = read_pud(path);
    stack.images[n] = arr.dtype == PudType::uint8 ? Grid<double>(arr.channel() / 255.0) : arr.channel();
  }
  return stack;
}

PhaseMap<double> load_absolute_phase(const fs::path& dir, int f) {
  const fs::path path = dir / ("phi_abs_f" + std::to_string(f) + ".pud");
  if (!fs::exists(path)) throw Error(Errc::DatasetMissingFrequency, "missing " + path.string());
  return {read_pud(path).channel(), PhaseKind::absolute, f};
}

OrderGrid load_orders(const fs::path& dir, int f) {
  const fs::path path = dir / ("k_f" + std::to_string(f) + ".pud");
  if (!fs::exists(path)) throw Error(Errc::DatasetMissingFrequency, "missing " + path.string());
  return read_pud(path).int_channel();
}

Mask load_mask(const fs::path& dir) { return read_pud(dir / "mask.pud").mask_channel(); }

UnwrapInputs retrieve_inputs(const FringeStack<double>& unit, const FringeStack<double>& high,
                             double modulation_threshold) {
  UnwrapInputs in;
  in.Phi_1 = unit_absolute(retrieve_phase(unit));
  in.phi_h = retrieve_phase(high);
  in.mask = modulation(unit, modulation_threshold).mask && modulation(high, modulation_threshold).mask;
  return in;
}

OrderGrid reference_orders(const PhaseMap<double>& Phi_ref, const PhaseMap<double>& phi_h) {
  if (!same_shape(Phi_ref.values, phi_h.values)) {
    throw Error(Errc::DimensionMismatch, "reference and wrapped phase differ in size");
  }
  const double two_pi = 2 * std::numbers::pi;
  return ((Phi_ref.values - phi_h.values) / two_pi).round().cast<std::int32_t>();
}

Mask evaluation_mask(const Mask& valid, const OrderGrid& k_ref, int f_h) {
  if (!same_shape(valid, k_ref)) throw Error(Errc::DimensionMismatch, "mask and reference orders differ in size");
  return valid && (k_ref >= 0) && (k_ref < f_h);
}

SceneInputs load_scene(const fs::path& root, const Manifest& manifest, const SceneRecord& scene, int f_h,
                       double modulation_threshold) {
  if (!manifest.has_frequency(1) || !manifest.has_frequency(f_h)) {
    throw Error(Errc::DatasetMissingFrequency, "dataset lacks f=1 or f=" + std::to_string(f_h));
  }
  const fs::path dir = scene_dir(root, scene);
  SceneInputs s;
  s.inputs = retrieve_inputs(load_stack(dir, scene_acquisition(manifest.acquisition(1), scene.seed)),
                             load_stack(dir, scene_acquisition(manifest.acquisition(f_h), scene.seed)),
                             modulation_threshold);
  s.Phi_ref = load_absolute_phase(dir, f_h);
  s.k_ref = reference_orders(s.Phi_ref, s.inputs.phi_h);
  s.mask = evaluation_mask(s.inputs.mask, s.k_ref, f_h);
  return s;
}

}  // namespace phaseforge
