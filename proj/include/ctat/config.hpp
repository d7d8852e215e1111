#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ctat/detector.hpp"
#include "ctat/field.hpp"
#include "ctat/rays.hpp"
#include "ctat/wave.hpp"

namespace ctat {

/// Any problem with a config file: missing, unparsable, unknown key or a
/// violated invariant. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ReconMethod { Landweber, Cg };

struct ExperimentConfig {
  // [grid]
  double half_width = 3.6;
  int n = 129;
  double pml_width = 0.5;
  double pml_sigma_max = 120.0;
  int pml_order = 2;

  SpeedSpec speed = speed::PaperDefault{};
  PhantomSpec phantom;
  bool has_phantom = false;  // a [phantom] section with at least one component

  DetectorConfig detector;
  Interpolation interpolation = Interpolation::Bilinear;

  // [time] chi cutoff on recorded data, chi_T < chi_T1 <= record_time
  double chi_T = 4.5;
  double chi_T1 = 5.0;

  // [aperture] time window U = (t_min, t_max] used by the visibility classifier
  double u_min = 0.0;
  double u_max = 5.0;

  // [recon]
  ReconMethod method = ReconMethod::Landweber;
  int iterations = 50;
  double step = 0.0;
  double tol = 1e-6;
  double tikhonov = 0.0;
  double support_radius = 1.0;
  int norm_iters = 30;

  // [noise] additive Gaussian noise, std = relative * max |data|
  double noise_relative = 0.0;

  // [visibility]
  double edge_threshold = 0.5;
  VisibilityOptions vis;

  // [sweep]
  int sweep_levels = 3;
  int sweep_n0 = 193;

  // [run]
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  Grid2D grid() const { return make_grid(half_width, n, pml_width); }
  PmlProfile pml(const Grid2D& g) const;
  Aperture aperture() const;

  /// Re-checks every module invariant (grid, PML clearance, detector, cutoff,
  /// phantom support) and throws ConfigError naming the first violation.
  void validate() const;

  /// Detector block as stored in array sidecars.
  nlohmann::json detector_json() const;
};

/// Reads an INI file (see docs/config.md for the grammar). Unknown sections
/// or keys, duplicate keys and malformed values are errors.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<string>");

nlohmann::json detector_to_json(const DetectorConfig& c);
DetectorConfig detector_from_json(const nlohmann::json& j);

}  // namespace ctat
