#pragma once

#include "scatent/calibration.hpp"
#include "scatent/certify.hpp"
#include "scatent/epr.hpp"
#include "scatent/optics.hpp"
#include "scatent/spadsim.hpp"
#include "scatent/twophoton.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace scatent::pipeline {

/// Invalid or incomplete run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage failed; `stage` names it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class Scenario { no_medium, medium_flat, medium_corrected };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct PlantedHotPixel {
  std::size_t x = 0, y = 0;
  double excess_rate = 0;
};

struct RunConfig {
  std::vector<Scenario> scenarios{Scenario::no_medium};
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "run";

  optics::ModeGrid grid{16, 16, 10e-6, optics::PlaneKind::position};
  optics::MediumKind medium_kind = optics::MediumKind::thin_phase;
  std::optional<std::filesystem::path> medium_file;
  std::size_t screens = 2;
  double screen_distance = 1e-3;
  double wavelength = 810e-9;
  double tm_counts_per_pixel = 0.0;  ///< shot noise of the transmission-matrix probe

  double sigma_r_pixels = 0.8;  ///< position correlation width in grid pixels
  double sigma_product = 0.1;   ///< sigma_r * sigma_k of the source

  double pair_rate = 1.0;
  double singles_rate = 4.0;
  double dark_rate = 0.0;
  double crosstalk_strength = 0.0;
  std::vector<PlantedHotPixel> hot_pixels;
  double hot_threshold = 0.10;
  calibration::CrosstalkModel crosstalk_model = calibration::CrosstalkModel::reference_pairs;

  std::size_t frames = 1000000;
  std::size_t dark_frames = 20000;
  std::vector<std::size_t> checkpoints;  ///< frame prefixes for the dimension curve; empty: frames / 2^k
  std::vector<epr::Basis> bases{epr::Basis::position, epr::Basis::momentum};

  std::size_t d = 45;
  std::size_t spacing = 2;
  std::optional<epr::OpticalCalibration> calibration;  ///< default: derived from the grid
  bool write_frames = false;
};

/// Parses the nested JSON configuration. Missing keys take the defaults above,
/// except `seed`, which is mandatory.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical form of the configuration (output directory omitted).
nlohmann::json to_json(const RunConfig& config);

/// Calibration under which one position pixel is one grid pitch and one
/// momentum pixel is 2 pi / (width * pitch).
epr::OpticalCalibration grid_calibration(const optics::ModeGrid& grid, double wavelength);

struct CurvePoint {
  std::size_t frames = 0;
  double f_tilde = 0;
  std::size_t certified_r = 0;
};

struct ScenarioResult {
  Scenario scenario = Scenario::no_medium;
  std::filesystem::path directory;
  twophoton::ConditionScores scores;
  std::optional<epr::EprReport> epr;
  std::optional<certify::WitnessReport> witness;
  std::vector<CurvePoint> curve;
  std::size_t hot_pixels = 0;
};

struct RunSummary {
  std::filesystem::path directory;
  std::vector<ScenarioResult> scenarios;
};

/// Runs every configured scenario into <output_dir>/<scenario>/ and writes a
/// manifest of content hashes. Timestamps go only to <output_dir>/run.log.
RunSummary run_pipeline(const RunConfig& config, int workers = worker_count());

/// Plot-ready CSV files under <run_dir>/figures/ from a completed run.
std::vector<std::filesystem::path> emit_figures(const std::filesystem::path& run_dir);

}  // namespace scatent::pipeline
