// Command-line front end for the scatent library.

#include "scatent/calibration.hpp"
#include "scatent/certify.hpp"
#include "scatent/epr.hpp"
#include "scatent/montecarlo.hpp"
#include "scatent/pipeline.hpp"
#include "scatent/shaping.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace scatent;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open " + path.string());
  return is;
}

epr::Basis parse_basis(const std::string& s) {
  if (s == "position") return epr::Basis::position;
  if (s == "momentum") return epr::Basis::momentum;
  throw UsageError("basis must be 'position' or 'momentum'");
}

// A JPD file (.ejpd) is used as is; anything else is read as a frame stack.
struct JpdInput {
  std::string hot_mask, dark;
  std::string model = "reference_pairs";
  std::optional<calibration::CrosstalkReference> reference;

  void add(CLI::App* app) {
    app->add_option("--hot-pixels", hot_mask, "Hot pixel list to mask");
    app->add_option("--dark", dark, "Dark frame stack for cross-talk correction of frame inputs");
    app->add_option("--crosstalk-model", model, "Cross-talk correction: reference_pairs or first_order")
        ->check(CLI::IsMember({"reference_pairs", "first_order"}));
  }

  jpd::Jpd load(const fs::path& path, int workers) {
    jpd::Jpd g;
    if (path.extension() == ".ejpd") {
      if (!dark.empty()) throw UsageError("--dark needs frame-stack inputs, not " + path.string());
      g = jpd::load_jpd(path);
    } else {
      const auto stack = spadsim::load_stack(path);
      g = jpd::accumulate_jpd(stack, std::nullopt, workers);
      if (!dark.empty()) {
        if (!reference) reference = calibration::characterize_crosstalk(spadsim::load_stack(dark), workers);
        g = calibration::correct_crosstalk(g, *reference, stack.mean_image(), 2,
                                           calibration::crosstalk_model_from_string(model))
                .corrected;
      }
    }
    if (!hot_mask.empty()) {
      auto is = open_in(hot_mask);
      calibration::apply_mask(g, calibration::read_mask(is));
    }
    return g;
  }
};

struct SensorOptions {
  double pair_rate = 1.0, singles_rate = 0.0, dark_rate = 0.0, crosstalk = 0.0;

  void add(CLI::App* app) {
    app->add_option("--pair-rate", pair_rate, "Mean detected pairs per frame");
    app->add_option("--singles-rate", singles_rate, "Mean unpaired detections per frame");
    app->add_option("--dark-rate", dark_rate, "Dark counts per pixel per frame");
    app->add_option("--crosstalk", crosstalk, "Nearest-neighbor cross-talk probability");
  }
  spadsim::SensorSpec spec(std::size_t width, std::size_t height, std::uint64_t seed) const {
    spadsim::SensorSpec s;
    s.width = width;
    s.height = height;
    s.pair_rate = pair_rate;
    s.singles_rate = singles_rate;
    s.dark_rate = dark_rate;
    if (crosstalk > 0) s.crosstalk = spadsim::CrosstalkKernel::exponential(crosstalk);
    s.seed = seed;
    return s;
  }
};

struct CalibrationOptions {
  epr::OpticalCalibration cal;
  void add(CLI::App* app) {
    app->add_option("--pixel-pitch", cal.pixel_pitch, "Sensor pixel pitch (m)");
    app->add_option("--magnification", cal.magnification, "Imaging magnification");
    app->add_option("--focal-length", cal.effective_focal_length, "Effective focal length (m)");
    app->add_option("--wavelength", cal.wavelength, "Photon wavelength (m)");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and analysis of spatially entangled photon pairs through scattering media"};
  app.require_subcommand(1);
  const int workers = worker_count();

  // simulate: synthesize a scattering medium.
  auto* sim = app.add_subcommand("simulate", "Synthesize a scattering medium transfer matrix");
  std::string sim_kind = "thin", sim_out = "medium.etmx";
  optics::MediumSpec sim_spec;
  std::size_t sim_width = 16, sim_height = 16;
  double sim_pitch = 10e-6;
  sim->add_option("--kind", sim_kind, "thin, thick or multi_screen")->check(CLI::IsMember({"thin", "thick", "multi_screen"}));
  sim->add_option("--width", sim_width, "Grid width in modes");
  sim->add_option("--height", sim_height, "Grid height in modes");
  sim->add_option("--pitch", sim_pitch, "Mode pitch (m)");
  sim->add_option("--seed", sim_spec.seed, "Random seed")->required();
  sim->add_option("--screens", sim_spec.screens, "Number of phase screens (multi_screen)");
  sim->add_option("--screen-distance", sim_spec.screen_distance, "Screen spacing (m)");
  sim->add_option("--wavelength", sim_spec.wavelength, "Wavelength (m)");
  sim->add_option("-o,--output", sim_out, "Output transfer matrix");

  // acquire: propagate the source through a medium and record frames.
  auto* acq = app.add_subcommand("acquire", "Simulate detector frames for one basis");
  std::string acq_medium, acq_mask, acq_basis = "position", acq_out = "frames.spadstk";
  std::size_t acq_frames = 100000, acq_width = 16, acq_height = 16;
  double acq_pitch = 10e-6, acq_sigma_r = 0.8, acq_product = 0.1;
  std::uint64_t acq_seed = 0;
  SensorOptions acq_sensor;
  acq->add_option("--medium", acq_medium, "Transfer matrix file (default: no medium)");
  acq->add_option("--mask", acq_mask, "Phase mask file (default: flat)");
  acq->add_option("--basis", acq_basis, "position or momentum");
  acq->add_option("--frames", acq_frames, "Number of frames");
  acq->add_option("--width", acq_width, "Grid width without a medium file");
  acq->add_option("--height", acq_height, "Grid height without a medium file");
  acq->add_option("--pitch", acq_pitch, "Grid pitch without a medium file (m)");
  acq->add_option("--sigma-r-pixels", acq_sigma_r, "Position correlation width (pixels)");
  acq->add_option("--sigma-product", acq_product, "sigma_r * sigma_k of the source");
  acq->add_option("--seed", acq_seed, "Random seed")->required();
  acq->add_option("-o,--output", acq_out, "Output frame stack");
  acq_sensor.add(acq);

  // calibrate: hot pixels and cross-talk reference from a dark stack.
  auto* calib = app.add_subcommand("calibrate", "Characterize hot pixels and cross-talk from a dark stack");
  std::string cal_dark, cal_mask_out = "hot_pixels.txt", cal_ref_out = "crosstalk.ejpd";
  double cal_threshold = 0.10;
  calib->add_option("dark", cal_dark, "Dark frame stack")->required();
  calib->add_option("--threshold", cal_threshold, "Hot pixel threshold as a fraction of the maximum");
  calib->add_option("--mask-out", cal_mask_out, "Hot pixel list");
  calib->add_option("--reference-out", cal_ref_out, "Cross-talk reference JPD");

  // analyze-epr
  auto* ana = app.add_subcommand("analyze-epr", "Fit correlation widths and evaluate the EPR criterion");
  std::string ana_pos, ana_mom, ana_out;
  JpdInput ana_in;
  bool ana_json = false, ana_2d = false;
  std::size_t ana_window = 15;
  CalibrationOptions ana_cal;
  ana->add_option("--position", ana_pos, "Position-basis frames or JPD")->required();
  ana->add_option("--momentum", ana_mom, "Momentum-basis frames or JPD")->required();
  ana_in.add(ana);
  ana->add_option("--noise-window", ana_window, "Noise window side (pixels)");
  ana->add_flag("--fit-2d", ana_2d, "Fit a full 2D Gaussian instead of the radial profile");
  ana->add_flag("--json", ana_json, "Write JSON instead of key=value text");
  ana->add_option("-o,--output", ana_out, "Report file (default: stdout)");
  ana_cal.add(ana);

  // certify
  auto* cer = app.add_subcommand("certify", "Certify the entanglement dimension from two bases");
  JpdInput cer_in;
  std::string cer_pos, cer_mom, cer_pos_csv, cer_mom_csv, cer_out_dir;
  std::size_t cer_d = 45, cer_spacing = 2;
  cer->add_option("--position", cer_pos, "Position-basis frames or JPD");
  cer->add_option("--momentum", cer_mom, "Momentum-basis frames or JPD");
  cer->add_option("--position-csv", cer_pos_csv, "Position correlation matrix (CSV)");
  cer->add_option("--momentum-csv", cer_mom_csv, "Momentum correlation matrix (CSV, parity pairs on the diagonal)");
  cer_in.add(cer);
  cer->add_option("--d", cer_d, "Number of pixels");
  cer->add_option("--spacing", cer_spacing, "Pixel spacing");
  cer->add_option("--output-dir", cer_out_dir, "Directory for matrices and the report");

  // optimize
  auto* opt = app.add_subcommand("optimize", "Optimize SLM phase masks for a medium");
  std::string opt_medium, opt_d1 = "mask_d1.txt", opt_d2 = "mask_d2.txt";
  std::size_t opt_budget = 0, opt_steps = 16, opt_passes = 6;
  double opt_distance = 0, opt_wavelength = 810e-9, opt_wp = 1, opt_wm = 1;
  opt->add_option("--medium", opt_medium, "Transfer matrix file")->required();
  opt->add_option("--budget", opt_budget, "Objective evaluations (default: enough for all passes)");
  opt->add_option("--phases", opt_steps, "Candidate phases per macro-pixel");
  opt->add_option("--passes", opt_passes, "Maximum passes");
  opt->add_option("--second-plane", opt_distance, "Distance to a second SLM plane (m); 0 for one plane");
  opt->add_option("--wavelength", opt_wavelength, "Wavelength for the free-space gap (m)");
  opt->add_option("--weight-position", opt_wp, "Weight of the position-basis term");
  opt->add_option("--weight-momentum", opt_wm, "Weight of the momentum-basis term");
  opt->add_option("--out-d1", opt_d1, "First mask output");
  opt->add_option("--out-d2", opt_d2, "Second mask output");

  // plateau
  auto* pla = app.add_subcommand("plateau", "Fidelity bound versus frame count from the noise model");
  montecarlo::PlateauSpec pla_spec;
  std::string pla_out;
  pla->add_option("--d", pla_spec.d, "Dimension");
  pla->add_option("--alpha", pla_spec.alpha, "Diagonal mean");
  pla->add_option("--alpha-prime", pla_spec.alpha_prime, "Off-diagonal mean");
  pla->add_option("--K", pla_spec.K, "Noise scale");
  pla->add_option("--trials", pla_spec.trials, "Trials per frame count");
  pla->add_option("--seed", pla_spec.seed, "Random seed")->required();
  pla->add_option("--frames", pla_spec.frame_counts, "Frame counts");
  pla->add_option("-o,--output", pla_out, "CSV output (default: stdout)");

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline from a configuration file");
  std::string run_config, run_dir;
  run->add_option("config", run_config, "JSON configuration")->required();
  run->add_option("--output-dir", run_dir, "Override the output directory");

  // emit-figures
  auto* fig = app.add_subcommand("emit-figures", "Write plot-ready CSV files for a completed run");
  std::string fig_dir;
  fig->add_option("run_dir", fig_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) {
      optics::ModeGrid grid{sim_width, sim_height, sim_pitch, optics::PlaneKind::position};
      sim_spec.kind = sim_kind == "thin"    ? optics::MediumKind::thin_phase
                      : sim_kind == "thick" ? optics::MediumKind::thick_iid_gaussian
                                            : optics::MediumKind::multi_screen;
      sim_spec.in_grid = grid;
      sim_spec.out_grid = grid;
      const auto tm = optics::synth_medium(sim_spec);
      for (const auto& w : tm.warnings) std::cerr << "warning: " << w << '\n';
      optics::save(sim_out, tm);
    } else if (*acq) {
      optics::ModeGrid grid{acq_width, acq_height, acq_pitch, optics::PlaneKind::position};
      optics::TransferMatrix T;
      if (acq_medium.empty()) {
        T = optics::dft_matrix(grid);
      } else {
        T = optics::load_transfer_matrix(acq_medium);
        grid = T.in_grid;
      }
      twophoton::PhaseMask mask = twophoton::flat_mask(grid);
      if (!acq_mask.empty()) {
        auto is = open_in(acq_mask);
        mask = twophoton::read_mask(is, grid);
      }
      twophoton::GaussianPairSpec src;
      src.sigma_r = acq_sigma_r * grid.pitch;
      src.sigma_k = acq_product / src.sigma_r;
      const auto basis = parse_basis(acq_basis) == epr::Basis::position ? optics::PlaneKind::position
                                                                          : optics::PlaneKind::momentum;
      const auto state = twophoton::propagate(twophoton::gaussian_state(grid, src), T, mask, basis);
      const auto stack = spadsim::simulate_frames(state, acq_sensor.spec(grid.width, grid.height, acq_seed),
                                                  acq_frames, workers);
      spadsim::save(acq_out, stack);
    } else if (*calib) {
      const auto dark = spadsim::load_stack(cal_dark);
      const auto mask = calibration::find_hot_pixels(dark, cal_threshold);
      auto os = open_out(cal_mask_out);
      calibration::write_mask(os, mask);
      const auto ref = calibration::characterize_crosstalk(dark, workers);
      for (const auto& w : ref.warnings) std::cerr << "warning: " << w << '\n';
      jpd::save(cal_ref_out, ref.gamma0);
      std::cout << "hot_pixels=" << mask.count() << "\nsupport_violation=" << (ref.support_violation ? "true" : "false")
                << '\n';
    } else if (*ana) {
      const auto jp = ana_in.load(ana_pos, workers);
      const auto jm = ana_in.load(ana_mom, workers);
      epr::FitOptions fo;
      fo.noise_window = ana_window;
      fo.full_2d = ana_2d;
      const auto fr = epr::fit_gaussian_width(jpd::project_minus(jp), fo);
      const auto fk = epr::fit_gaussian_width(jpd::project_sum(jm), fo);
      const auto& cal = ana_cal.cal;
      auto rep = epr::epr_criterion(epr::pixel_to_physical(fr.delta, cal, epr::Basis::position),
                                    epr::pixel_to_physical(fk.delta, cal, epr::Basis::momentum),
                                    epr::pixel_to_physical(fr.delta_uncertainty, cal, epr::Basis::position),
                                    epr::pixel_to_physical(fk.delta_uncertainty, cal, epr::Basis::momentum));
      rep.approximate = fr.approximate || fk.approximate;
      std::ofstream file;
      std::ostream* os = &std::cout;
      if (!ana_out.empty()) os = &(file = open_out(ana_out));
      ana_json ? epr::write_report_json(*os, rep) : epr::write_report_text(*os, rep);
    } else if (*cer) {
      certify::CorrelationMatrix mp, mm;
      if (!cer_pos_csv.empty() || !cer_mom_csv.empty()) {
        if (cer_pos_csv.empty() || cer_mom_csv.empty()) throw UsageError("give both --position-csv and --momentum-csv");
        auto ps = open_in(cer_pos_csv);
        auto ms = open_in(cer_mom_csv);
        mp = certify::read_matrix_csv(ps, epr::Basis::position);
        mm = certify::read_matrix_csv(ms, epr::Basis::momentum);
      } else {
        if (cer_pos.empty() || cer_mom.empty()) throw UsageError("give --position and --momentum inputs");
        const auto jp = cer_in.load(cer_pos, workers);
        const auto jm = cer_in.load(cer_mom, workers);
        calibration::HotPixelMask hot = calibration::HotPixelMask::none(jp.width(), jp.height());
        if (!cer_in.hot_mask.empty()) {
          auto is = open_in(cer_in.hot_mask);
          hot = calibration::read_mask(is);
        }
        std::vector<double> marginal(jp.pixels(), 0.0);
        for (std::size_t a = 0; a < jp.pixels(); ++a)
          for (std::size_t b = 0; b < jp.pixels(); ++b) marginal[a] += std::max(jp.at(a, b), 0.0);
        const auto set = certify::select_pixel_set(marginal, jp.width(), jp.height(), cer_d, cer_spacing, hot.masked);
        const auto sum = jpd::project_sum(jm);
        const auto peak = static_cast<std::size_t>(std::max_element(sum.values.begin(), sum.values.end()) -
                                                   sum.values.begin());
        mp = certify::correlation_matrix(jp, set, epr::Basis::position, hot.masked);
        mm = certify::correlation_matrix(jm, set, epr::Basis::momentum, hot.masked,
                                         certify::MirrorSum{static_cast<long>(peak % sum.width),
                                                            static_cast<long>(peak / sum.width)});
      }
      const auto rep = certify::fidelity_bound(mp, mm);
      certify::write_witness_report(std::cout, rep);
      if (!cer_out_dir.empty()) {
        auto a = open_out(fs::path(cer_out_dir) / "correlation_position.csv");
        certify::write_matrix_csv(a, mp);
        auto b = open_out(fs::path(cer_out_dir) / "correlation_momentum.csv");
        certify::write_matrix_csv(b, mm);
        auto c = open_out(fs::path(cer_out_dir) / "witness.txt");
        certify::write_witness_report(c, rep);
      }
    } else if (*opt) {
      std::optional<shaping::SecondPlane> second;
      if (opt_distance > 0) second = shaping::SecondPlane{opt_distance, opt_wavelength};
      auto problem = shaping::make_problem(optics::load_transfer_matrix(opt_medium), second);
      problem.weight_position = opt_wp;
      problem.weight_momentum = opt_wm;
      shaping::ShapingOptions so;
      so.phase_steps = opt_steps;
      so.max_passes = opt_passes;
      const std::size_t budget = opt_budget ? opt_budget : problem.medium.in_modes() * opt_steps * opt_passes;
      const auto res = shaping::optimize_masks(problem, budget, so);
      problem.d1 = res.d1;
      problem.d2 = res.d2;
      const auto ptb = shaping::peak_to_background(problem);
      {
        auto os = open_out(opt_d1);
        twophoton::write_mask(os, res.d1);
      }
      if (second) {
        auto os = open_out(opt_d2);
        twophoton::write_mask(os, res.d2);
      }
      std::cout << "objective_start=" << res.trace.front() << "\nobjective_end=" << res.trace.back()
                << "\nevaluations=" << res.evaluations << "\nbudget_exhausted=" << (res.budget_exhausted ? "true" : "false")
                << "\npeak_to_background_position=" << ptb.position << "\npeak_to_background_momentum=" << ptb.momentum
                << '\n';
    } else if (*pla) {
      const auto curve = montecarlo::plateau_curve(pla_spec, workers);
      std::ofstream file;
      std::ostream* os = &std::cout;
      if (!pla_out.empty()) os = &(file = open_out(pla_out));
      montecarlo::write_curve_csv(*os, curve);
    } else if (*run) {
      auto config = pipeline::load_config(run_config);
      if (!run_dir.empty()) config.output_dir = run_dir;
      const auto summary = pipeline::run_pipeline(config, workers);
      for (const auto& s : summary.scenarios) {
        std::cout << pipeline::to_string(s.scenario) << ": score2=" << s.scores.score2;
        if (s.epr) std::cout << " product=" << s.epr->product << " violated=" << (s.epr->violated ? "true" : "false");
        if (s.witness) std::cout << " F_tilde=" << s.witness->f_tilde << " certified_r=" << s.witness->certified_r;
        std::cout << '\n';
      }
    } else if (*fig) {
      for (const auto& p : pipeline::emit_figures(fig_dir)) std::cout << p.string() << '\n';
    }
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const pipeline::StageError& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
