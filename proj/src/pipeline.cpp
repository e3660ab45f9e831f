#include "scatent/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace scatent::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kMediumTag = 0x4d454449;  // "MEDI"
constexpr std::uint64_t kProbeTag = 0x50524f42;   // "PROB"
constexpr std::uint64_t kFramesTag = 0x4652414d;  // "FRAM"
constexpr std::uint64_t kDarkTag = 0x4441524b;    // "DARK"

const char* basis_name(epr::Basis b) { return b == epr::Basis::position ? "position" : "momentum"; }

epr::Basis basis_from_string(const std::string& s) {
  if (s == "position") return epr::Basis::position;
  if (s == "momentum") return epr::Basis::momentum;
  throw ConfigError("unknown basis '" + s + "'");
}

const char* medium_name(optics::MediumKind k) {
  switch (k) {
    case optics::MediumKind::thin_phase: return "thin";
    case optics::MediumKind::thick_iid_gaussian: return "thick";
    case optics::MediumKind::multi_screen: return "multi_screen";
  }
  return "thin";
}

optics::MediumKind medium_from_string(const std::string& s) {
  if (s == "thin") return optics::MediumKind::thin_phase;
  if (s == "thick") return optics::MediumKind::thick_iid_gaussian;
  if (s == "multi_screen") return optics::MediumKind::multi_screen;
  throw ConfigError("unknown medium kind '" + s + "'");
}

// Reads an object section, rejecting keys that are not listed.
const json& section(const json& j, const char* name, std::initializer_list<const char*> keys) {
  static const json empty = json::object();
  if (!j.contains(name)) return empty;
  const json& s = j.at(name);
  if (!s.is_object()) throw ConfigError(std::string("section '") + name + "' must be an object");
  for (const auto& [k, v] : s.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* key) { return k == key; })) {
      throw ConfigError(std::string("unknown key '") + name + "." + k + "'");
    }
  }
  return s;
}

template <class T>
void read(const json& s, const char* key, T& out) {
  if (!s.contains(key)) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t>) {
      const json& v = s.at(key);
      if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d < 0 || d != std::floor(d)) throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
        out = static_cast<std::size_t>(d);
      } else {
        out = v.get<std::size_t>();
      }
    } else {
      out = s.at(key).get<T>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : os_(path, std::ios::app) {}
  void line(const std::string& text) {
    os_ << now_iso() << ' ' << text << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
};

// Writes artifacts and remembers their content hashes for the manifest.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& relative, const std::string& bytes) {
    const fs::path path = root_ / relative;
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("cannot write " + path.string());
    hashes_[relative] = hex64(fnv1a(std::as_bytes(std::span(bytes.data(), bytes.size()))));
  }

  template <class Fn>
  void write_with(const std::string& relative, Fn&& fn) {
    std::ostringstream os(std::ios::binary);
    fn(os);
    write(relative, os.str());
  }

  void note(const std::string& key, const std::string& value) { notes_[key] = value; }

  void write_manifest() {
    std::ostringstream os;
    for (const auto& [name, hash] : hashes_) os << name << ' ' << hash << '\n';
    for (const auto& [name, value] : notes_) os << name << ' ' << value << '\n';
    std::ofstream out(root_ / "manifest.txt", std::ios::binary | std::ios::trunc);
    out << os.str();
  }

 private:
  fs::path root_;
  std::map<std::string, std::string> hashes_;
  std::map<std::string, std::string> notes_;
};

template <class Fn>
void run_stage(const std::string& name, RunLog& log, const std::string& scope, Fn&& fn) {
  log.line(scope + " " + name + " begin");
  try {
    fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    log.line(scope + " " + name + " failed: " + e.what());
    throw StageError(name, e.what());
  }
  log.line(scope + " " + name + " end");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::size_t> checkpoints_for(const RunConfig& c) {
  std::vector<std::size_t> cps = c.checkpoints;
  if (cps.empty()) {
    for (int k = 6; k >= 0; --k) {
      const std::size_t n = c.frames >> k;
      if (n >= 1000 || k == 0) cps.push_back(n);
    }
  }
  std::sort(cps.begin(), cps.end());
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
  std::erase_if(cps, [&](std::size_t n) { return n < 2 || n > c.frames; });
  return cps;
}

struct Calibrated {
  calibration::HotPixelMask hot;
  std::optional<calibration::CrosstalkReference> crosstalk;
  calibration::CrosstalkModel model = calibration::CrosstalkModel::reference_pairs;
};

jpd::Jpd estimate(const spadsim::FrameStack& stack, const Calibrated& cal, std::optional<std::size_t> limit,
                  const std::vector<double>& intensity, int workers) {
  jpd::Jpd g = jpd::accumulate_jpd(stack, limit, workers);
  if (cal.crosstalk) g = calibration::correct_crosstalk(g, *cal.crosstalk, intensity, 2, cal.model).corrected;
  calibration::apply_mask(g, cal.hot);
  return g;
}

certify::MirrorSum momentum_mirror(const jpd::Projection& sum) {
  const auto it = std::max_element(sum.values.begin(), sum.values.end());
  const auto cell = static_cast<std::size_t>(it - sum.values.begin());
  return {static_cast<long>(cell % sum.width), static_cast<long>(cell / sum.width)};
}

}  // namespace

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::no_medium: return "no_medium";
    case Scenario::medium_flat: return "medium_flat";
    case Scenario::medium_corrected: return "medium_corrected";
  }
  return "no_medium";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "no_medium") return Scenario::no_medium;
  if (s == "medium_flat") return Scenario::medium_flat;
  if (s == "medium_corrected") return Scenario::medium_corrected;
  throw ConfigError("unknown scenario '" + s + "'");
}

RunConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  static const std::set<std::string> top{"seed",   "output_dir", "scenario", "scenarios",   "grid",      "medium",
                                         "source", "sensor",     "acquisition", "pixel_set", "calibration"};
  for (const auto& [k, v] : j.items())
    if (!top.count(k)) throw ConfigError("unknown key '" + k + "'");

  RunConfig c;
  if (!j.contains("seed")) throw ConfigError("'seed' is mandatory");
  read(j, "seed", c.seed);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

  if (j.contains("scenario") && j.contains("scenarios")) throw ConfigError("give either 'scenario' or 'scenarios'");
  if (j.contains("scenario")) {
    const auto s = j.at("scenario").get<std::string>();
    c.scenarios = s == "all" ? std::vector{Scenario::no_medium, Scenario::medium_flat, Scenario::medium_corrected}
                             : std::vector{scenario_from_string(s)};
  } else if (j.contains("scenarios")) {
    c.scenarios.clear();
    for (const auto& s : j.at("scenarios")) c.scenarios.push_back(scenario_from_string(s.get<std::string>()));
    if (c.scenarios.empty()) throw ConfigError("'scenarios' is empty");
  }

  const json& g = section(j, "grid", {"width", "height", "pitch"});
  read(g, "width", c.grid.width);
  read(g, "height", c.grid.height);
  read(g, "pitch", c.grid.pitch);

  const json& m = section(j, "medium", {"kind", "file", "screens", "screen_distance", "wavelength", "tm_counts_per_pixel"});
  if (m.contains("kind")) c.medium_kind = medium_from_string(m.at("kind").get<std::string>());
  if (m.contains("file") && !m.at("file").is_null()) c.medium_file = m.at("file").get<std::string>();
  read(m, "screens", c.screens);
  read(m, "screen_distance", c.screen_distance);
  read(m, "wavelength", c.wavelength);
  read(m, "tm_counts_per_pixel", c.tm_counts_per_pixel);

  const json& s = section(j, "source", {"sigma_r_pixels", "sigma_product"});
  read(s, "sigma_r_pixels", c.sigma_r_pixels);
  read(s, "sigma_product", c.sigma_product);

  const json& sen = section(j, "sensor", {"pair_rate", "singles_rate", "dark_rate", "crosstalk_strength", "hot_pixels",
                                          "hot_threshold", "crosstalk_model"});
  read(sen, "pair_rate", c.pair_rate);
  read(sen, "singles_rate", c.singles_rate);
  read(sen, "dark_rate", c.dark_rate);
  read(sen, "crosstalk_strength", c.crosstalk_strength);
  read(sen, "hot_threshold", c.hot_threshold);
  if (sen.contains("crosstalk_model")) {
    try {
      c.crosstalk_model = calibration::crosstalk_model_from_string(sen.at("crosstalk_model").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("sensor.crosstalk_model: ") + e.what());
    }
  }
  if (sen.contains("hot_pixels")) {
    for (const auto& h : sen.at("hot_pixels")) {
      PlantedHotPixel p;
      read(h, "x", p.x);
      read(h, "y", p.y);
      read(h, "excess_rate", p.excess_rate);
      c.hot_pixels.push_back(p);
    }
  }

  const json& a = section(j, "acquisition", {"frames", "dark_frames", "checkpoints", "bases", "write_frames"});
  read(a, "frames", c.frames);
  read(a, "dark_frames", c.dark_frames);
  read(a, "write_frames", c.write_frames);
  if (a.contains("checkpoints")) {
    for (const auto& v : a.at("checkpoints")) c.checkpoints.push_back(static_cast<std::size_t>(v.get<double>()));
  }
  if (a.contains("bases")) {
    c.bases.clear();
    for (const auto& b : a.at("bases")) c.bases.push_back(basis_from_string(b.get<std::string>()));
  }

  const json& ps = section(j, "pixel_set", {"d", "spacing"});
  read(ps, "d", c.d);
  read(ps, "spacing", c.spacing);

  if (j.contains("calibration")) {
    const json& cal = section(j, "calibration", {"pixel_pitch", "magnification", "effective_focal_length", "wavelength"});
    epr::OpticalCalibration oc;
    read(cal, "pixel_pitch", oc.pixel_pitch);
    read(cal, "magnification", oc.magnification);
    read(cal, "effective_focal_length", oc.effective_focal_length);
    read(cal, "wavelength", oc.wavelength);
    c.calibration = oc;
  }

  try {
    c.grid.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (c.frames < 2) throw ConfigError("need at least 2 frames");
  if (c.d < 2) throw ConfigError("pixel set needs d >= 2");
  if (c.spacing == 0) throw ConfigError("pixel spacing must be positive");
  if (!(c.sigma_r_pixels > 0 && c.sigma_product > 0)) throw ConfigError("source widths must be positive");
  if (!(c.wavelength > 0)) throw ConfigError("wavelength must be positive");
  if (c.medium_file && !fs::exists(*c.medium_file)) throw ConfigError("medium file not found: " + c.medium_file->string());
  for (const auto& h : c.hot_pixels)
    if (h.x >= c.grid.width || h.y >= c.grid.height) throw ConfigError("hot pixel outside the sensor");
  if (c.calibration) {
    try {
      c.calibration->validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("calibration: ") + e.what());
    }
  } else if (c.grid.width != c.grid.height) {
    throw ConfigError("a non-square grid needs an explicit calibration section");
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open configuration " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scenarios"] = json::array();
  for (auto s : c.scenarios) j["scenarios"].push_back(to_string(s));
  j["grid"] = {{"width", c.grid.width}, {"height", c.grid.height}, {"pitch", c.grid.pitch}};
  j["medium"] = {{"kind", medium_name(c.medium_kind)},
                 {"file", c.medium_file ? json(c.medium_file->string()) : json()},
                 {"screens", c.screens},
                 {"screen_distance", c.screen_distance},
                 {"wavelength", c.wavelength},
                 {"tm_counts_per_pixel", c.tm_counts_per_pixel}};
  j["source"] = {{"sigma_r_pixels", c.sigma_r_pixels}, {"sigma_product", c.sigma_product}};
  json hot = json::array();
  for (const auto& h : c.hot_pixels) hot.push_back({{"x", h.x}, {"y", h.y}, {"excess_rate", h.excess_rate}});
  j["sensor"] = {{"pair_rate", c.pair_rate},
                 {"singles_rate", c.singles_rate},
                 {"dark_rate", c.dark_rate},
                 {"crosstalk_strength", c.crosstalk_strength},
                 {"hot_pixels", hot},
                 {"hot_threshold", c.hot_threshold},
                 {"crosstalk_model", calibration::to_string(c.crosstalk_model)}};
  json bases = json::array();
  for (auto b : c.bases) bases.push_back(basis_name(b));
  j["acquisition"] = {{"frames", c.frames},
                      {"dark_frames", c.dark_frames},
                      {"checkpoints", checkpoints_for(c)},
                      {"bases", bases},
                      {"write_frames", c.write_frames}};
  j["pixel_set"] = {{"d", c.d}, {"spacing", c.spacing}};
  if (c.calibration) {
    j["calibration"] = {{"pixel_pitch", c.calibration->pixel_pitch},
                        {"magnification", c.calibration->magnification},
                        {"effective_focal_length", c.calibration->effective_focal_length},
                        {"wavelength", c.calibration->wavelength}};
  }
  return j;
}

epr::OpticalCalibration grid_calibration(const optics::ModeGrid& grid, double wavelength) {
  epr::OpticalCalibration cal;
  cal.wavelength = wavelength;
  cal.pixel_pitch = grid.pitch * cal.magnification;
  cal.effective_focal_length =
      cal.pixel_pitch * static_cast<double>(grid.width) * grid.pitch / wavelength;
  return cal;
}

RunSummary run_pipeline(const RunConfig& config, int workers) {
  RunSummary summary;
  summary.directory = config.output_dir;
  fs::create_directories(config.output_dir);
  RunLog log(config.output_dir / "run.log");
  ArtifactWriter out(config.output_dir);
  log.line("run seed=" + std::to_string(config.seed) + " workers=" + std::to_string(workers));
  out.write("config.json", to_json(config).dump(2) + "\n");

  const optics::ModeGrid& grid = config.grid;
  const auto cal = config.calibration.value_or(grid_calibration(grid, config.wavelength));
  const auto checkpoints = checkpoints_for(config);

  optics::TransferMatrix medium;
  const bool needs_medium = std::any_of(config.scenarios.begin(), config.scenarios.end(),
                                        [](Scenario s) { return s != Scenario::no_medium; });
  if (needs_medium) {
    run_stage("medium", log, "shared", [&] {
      if (config.medium_file) {
        medium = optics::load_transfer_matrix(*config.medium_file);
        if (!(medium.in_grid.same_shape(grid) && medium.out_grid.same_shape(grid))) {
          throw std::invalid_argument("medium file does not match the configured grid");
        }
      } else {
        optics::MediumSpec spec;
        spec.kind = config.medium_kind;
        spec.seed = derive_seed(config.seed, kMediumTag);
        spec.in_grid = grid;
        spec.out_grid = grid;
        spec.screens = config.screens;
        spec.screen_distance = config.screen_distance;
        spec.wavelength = config.wavelength;
        medium = optics::synth_medium(spec);
      }
    });
  }

  spadsim::SensorSpec sensor;
  sensor.width = grid.width;
  sensor.height = grid.height;
  sensor.pair_rate = config.pair_rate;
  sensor.singles_rate = config.singles_rate;
  sensor.dark_rate = config.dark_rate;
  if (config.crosstalk_strength > 0) sensor.crosstalk = spadsim::CrosstalkKernel::exponential(config.crosstalk_strength);
  for (const auto& h : config.hot_pixels) sensor.hot_pixels.push_back({h.y * grid.width + h.x, h.excess_rate});

  for (Scenario scenario : config.scenarios) {
    const std::string name = to_string(scenario);
    ScenarioResult result;
    result.scenario = scenario;
    result.directory = config.output_dir / name;
    const std::string dir = name + "/";

    optics::TransferMatrix T;
    twophoton::PhaseMask mask = twophoton::flat_mask(grid);
    run_stage("mask", log, name, [&] {
      T = scenario == Scenario::no_medium ? optics::dft_matrix(grid) : medium;
      if (scenario == Scenario::medium_corrected) {
        optics::TmProbeOptions probe;
        probe.counts_per_pixel = config.tm_counts_per_pixel;
        probe.seed = derive_seed(config.seed, kProbeTag);
        const auto measured = optics::measure_tm(T, grid, probe);
        mask = twophoton::correction_mask(measured.estimate);
      }
      out.write_with(dir + "medium.etmx", [&](std::ostream& os) { optics::write_transfer_matrix(os, T); });
      out.write_with(dir + "mask.txt", [&](std::ostream& os) { twophoton::write_mask(os, mask); });
    });

    std::map<epr::Basis, twophoton::TwoPhotonState> states;
    run_stage("propagate", log, name, [&] {
      const auto ideal = twophoton::identity_state(grid);
      result.scores = twophoton::condition_scores(twophoton::propagate(ideal, T, mask, optics::PlaneKind::momentum),
                                                  twophoton::propagate(ideal, T, mask, optics::PlaneKind::position));
      out.write(dir + "condition_scores.txt",
                "score2=" + fmt(result.scores.score2) + "\nscore3=" + fmt(result.scores.score3) + "\n");
      twophoton::GaussianPairSpec src;
      src.sigma_r = config.sigma_r_pixels * grid.pitch;
      src.sigma_k = config.sigma_product / src.sigma_r;
      const auto input = twophoton::gaussian_state(grid, src);
      for (auto b : config.bases) {
        const auto kind = b == epr::Basis::position ? optics::PlaneKind::position : optics::PlaneKind::momentum;
        states.emplace(b, twophoton::propagate(input, T, mask, kind));
        out.write_with(dir + "state_" + basis_name(b) + ".etmx",
                       [&](std::ostream& os) { twophoton::write_state(os, states.at(b)); });
      }
    });

    std::map<epr::Basis, spadsim::FrameStack> stacks;
    run_stage("acquire", log, name, [&] {
      for (auto b : config.bases) {
        spadsim::SensorSpec s = sensor;
        s.seed = derive_seed(config.seed, kFramesTag, static_cast<std::uint64_t>(b));
        stacks.emplace(b, spadsim::simulate_frames(states.at(b), s, config.frames, workers));
        out.note(dir + "frames_" + basis_name(b) + ".content_hash", hex64(stacks.at(b).content_hash()));
        if (config.write_frames) {
          out.write_with(dir + "frames_" + basis_name(b) + ".spadstk",
                         [&](std::ostream& os) { spadsim::write_stack(os, stacks.at(b)); });
        }
      }
    });

    Calibrated calib{calibration::HotPixelMask::none(grid.width, grid.height), std::nullopt, config.crosstalk_model};
    run_stage("calibrate", log, name, [&] {
      if (config.dark_frames >= 2) {
        spadsim::SensorSpec s = sensor;
        s.seed = derive_seed(config.seed, kDarkTag);
        const auto dark = spadsim::dark_stack(s, config.dark_frames, workers);
        out.note(dir + "dark.content_hash", hex64(dark.content_hash()));
        calib.hot = calibration::find_hot_pixels(dark, config.hot_threshold);
        auto ref = calibration::characterize_crosstalk(dark, workers);
        if (ref.gamma0.total() > 0) calib.crosstalk = std::move(ref);
      }
      result.hot_pixels = calib.hot.count();
      out.write_with(dir + "hot_pixels.txt", [&](std::ostream& os) { calibration::write_mask(os, calib.hot); });
    });

    std::map<epr::Basis, jpd::Jpd> jpds;
    std::map<epr::Basis, std::vector<double>> intensity;
    run_stage("jpd", log, name, [&] {
      for (auto b : config.bases) {
        intensity[b] = stacks.at(b).mean_image();
        jpds.emplace(b, estimate(stacks.at(b), calib, std::nullopt, intensity[b], workers));
        out.write_with(dir + "jpd_" + basis_name(b) + ".ejpd", [&](std::ostream& os) { jpd::write_jpd(os, jpds.at(b)); });
      }
    });

    std::map<epr::Basis, jpd::Projection> projections;
    run_stage("projections", log, name, [&] {
      for (auto b : config.bases) {
        const bool pos = b == epr::Basis::position;
        projections.emplace(b, pos ? jpd::project_minus(jpds.at(b)) : jpd::project_sum(jpds.at(b)));
        const std::string stem = dir + "projection_" + (pos ? "minus_" : "sum_") + basis_name(b);
        out.write_with(stem + ".eprj", [&](std::ostream& os) { jpd::write_projection(os, projections.at(b)); });
        out.write_with(stem + ".csv", [&](std::ostream& os) { jpd::write_projection_csv(os, projections.at(b)); });
      }
    });

    const bool both = jpds.count(epr::Basis::position) && jpds.count(epr::Basis::momentum);
    if (both) {
      run_stage("epr", log, name, [&] {
        const auto fr = epr::fit_gaussian_width(projections.at(epr::Basis::position));
        const auto fk = epr::fit_gaussian_width(projections.at(epr::Basis::momentum));
        auto rep = epr::epr_criterion(epr::pixel_to_physical(fr.delta, cal, epr::Basis::position),
                                      epr::pixel_to_physical(fk.delta, cal, epr::Basis::momentum),
                                      epr::pixel_to_physical(fr.delta_uncertainty, cal, epr::Basis::position),
                                      epr::pixel_to_physical(fk.delta_uncertainty, cal, epr::Basis::momentum));
        rep.approximate = fr.approximate || fk.approximate;
        result.epr = rep;
        out.write_with(dir + "epr_report.txt", [&](std::ostream& os) { epr::write_report_text(os, rep); });
        out.write_with(dir + "epr_report.json", [&](std::ostream& os) { epr::write_report_json(os, rep); });
      });

      run_stage("certify", log, name, [&] {
        const auto set = certify::select_pixel_set(intensity.at(epr::Basis::position), grid.width, grid.height, config.d,
                                                   config.spacing, calib.hot.masked);
        const auto mirror = momentum_mirror(projections.at(epr::Basis::momentum));
        auto witness_for = [&](const jpd::Jpd& jp, const jpd::Jpd& jm, certify::CorrelationMatrix* keep_pos,
                               certify::CorrelationMatrix* keep_mom) {
          auto mp = certify::correlation_matrix(jp, set, epr::Basis::position, calib.hot.masked);
          auto mm = certify::correlation_matrix(jm, set, epr::Basis::momentum, calib.hot.masked, mirror);
          auto rep = certify::fidelity_bound(mp, mm);
          if (keep_pos) *keep_pos = std::move(mp);
          if (keep_mom) *keep_mom = std::move(mm);
          return rep;
        };
        certify::CorrelationMatrix mp, mm;
        const auto rep = witness_for(jpds.at(epr::Basis::position), jpds.at(epr::Basis::momentum), &mp, &mm);
        result.witness = rep;
        out.write_with(dir + "pixel_set.txt", [&](std::ostream& os) {
          os << "# x y\n";
          for (std::size_t i = 0; i < set.d(); ++i) os << set.x(i) << ' ' << set.y(i) << '\n';
        });
        out.write_with(dir + "correlation_position.csv", [&](std::ostream& os) { certify::write_matrix_csv(os, mp); });
        out.write_with(dir + "correlation_momentum.csv", [&](std::ostream& os) { certify::write_matrix_csv(os, mm); });
        out.write_with(dir + "witness.txt", [&](std::ostream& os) { certify::write_witness_report(os, rep); });

        for (std::size_t n : checkpoints) {
          if (n == config.frames) {
            result.curve.push_back({n, rep.f_tilde, rep.certified_r});
            continue;
          }
          const auto jp = estimate(stacks.at(epr::Basis::position), calib, n, intensity.at(epr::Basis::position), workers);
          const auto jm = estimate(stacks.at(epr::Basis::momentum), calib, n, intensity.at(epr::Basis::momentum), workers);
          const auto r = witness_for(jp, jm, nullptr, nullptr);
          result.curve.push_back({n, r.f_tilde, r.certified_r});
        }
        out.write_with(dir + "dimension_curve.csv", [&](std::ostream& os) {
          os << "frames,F_tilde,certified_r\n";
          for (const auto& p : result.curve) os << p.frames << ',' << fmt(p.f_tilde) << ',' << p.certified_r << '\n';
        });
      });
    }
    summary.scenarios.push_back(std::move(result));
  }
  out.write_manifest();
  log.line("run complete");
  return summary;
}

std::vector<fs::path> emit_figures(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw std::runtime_error("run directory not found: " + run_dir.string());
  const fs::path fig = run_dir / "figures";
  std::vector<fs::path> written;
  bool any = false;
  auto copy = [&](const fs::path& from, const std::string& to) {
    if (!fs::exists(from)) throw std::runtime_error("missing artifact " + from.string());
    fs::create_directories(fig);
    fs::copy_file(from, fig / to, fs::copy_options::overwrite_existing);
    written.push_back(fig / to);
  };
  for (Scenario s : {Scenario::no_medium, Scenario::medium_flat, Scenario::medium_corrected}) {
    const std::string name = to_string(s);
    const fs::path dir = run_dir / name;
    if (!fs::is_directory(dir)) continue;
    any = true;
    copy(dir / "projection_minus_position.csv", "fig2_" + name + "_position_minus.csv");
    copy(dir / "projection_sum_momentum.csv", "fig2_" + name + "_momentum_sum.csv");
    copy(dir / "correlation_position.csv", "fig3_" + name + "_position.csv");
    copy(dir / "correlation_momentum.csv", "fig3_" + name + "_momentum.csv");
    copy(dir / "dimension_curve.csv", "fig4_" + name + ".csv");
  }
  if (!any) throw std::runtime_error("no scenario directories in " + run_dir.string());
  return written;
}

}  // namespace scatent::pipeline
