#include "ctat/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace ctat {

namespace {

constexpr double kPi = 3.14159265358979323846;

using boost::property_tree::ptree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"grid", {"half_width", "n", "pml_width", "pml_sigma_max", "pml_order"}},
      {"speed", {"kind", "c0", "amplitude", "eta_taper", "a", "sigma"}},
      {"phantom", {"margin"}},  // plus component<k>
      {"detector", {"mode", "R", "r", "n_theta", "n_alpha", "cfl", "interpolation", "arc_begin_deg", "arc_end_deg"}},
      {"time", {"T", "chi_T", "chi_T1"}},
      {"aperture", {"t_min", "t_max"}},
      {"recon", {"method", "iterations", "step", "tol", "tikhonov", "support_radius", "norm_iters"}},
      {"noise", {"relative"}},
      {"visibility", {"edge_threshold", "position_tol", "angle_tol_deg", "t_max", "h_ray", "sides"}},
      {"sweep", {"levels", "n0"}},
      {"run", {"seed", "output_dir"}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class Reader {
 public:
  Reader(const ptree& pt, std::string origin) : pt_(pt), origin_(std::move(origin)) {}

  const ptree* section(const std::string& name) const {
    auto it = pt_.find(name);
    return it == pt_.not_found() ? nullptr : &it->second;
  }

  std::optional<std::string> raw(const std::string& sec, const std::string& key) const {
    const ptree* s = section(sec);
    if (!s) return std::nullopt;
    auto it = s->find(key);
    if (it == s->not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  [[noreturn]] void fail(const std::string& sec, const std::string& key, const std::string& why) const {
    throw ConfigError(origin_ + ": [" + sec + "] " + key + ": " + why);
  }

  double num(const std::string& sec, const std::string& key, double def) const {
    const auto v = raw(sec, key);
    if (!v) return def;
    try {
      std::size_t pos = 0;
      const double d = std::stod(*v, &pos);
      if (pos != v->size() || !std::isfinite(d)) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      fail(sec, key, "expected a finite number, got '" + *v + "'");
    }
  }

  long integer(const std::string& sec, const std::string& key, long def) const {
    const auto v = raw(sec, key);
    if (!v) return def;
    try {
      std::size_t pos = 0;
      const long d = std::stol(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      fail(sec, key, "expected an integer, got '" + *v + "'");
    }
  }

  std::string text(const std::string& sec, const std::string& key, const std::string& def) const {
    return raw(sec, key).value_or(def);
  }

  const std::string& origin() const { return origin_; }

 private:
  const ptree& pt_;
  std::string origin_;
};

void check_keys(const ptree& pt, const std::string& origin) {
  for (const auto& [sec, body] : pt) {
    auto it = schema().find(sec);
    if (it == schema().end()) throw ConfigError(origin + ": unknown section [" + sec + "]");
    if (!body.data().empty() && body.empty()) {
      throw ConfigError(origin + ": key '" + sec + "' outside any section");
    }
    for (const auto& [key, val] : body) {
      if (it->second.count(key)) continue;
      if (sec == "phantom" && key.rfind("component", 0) == 0 && key.size() > 9 &&
          key.find_first_not_of("0123456789", 9) == std::string::npos) {
        continue;
      }
      throw ConfigError(origin + ": unknown key '" + key + "' in [" + sec + "]");
    }
  }
}

PhantomComponent parse_component(const Reader& rd, const std::string& key, const std::string& value) {
  std::istringstream is(value);
  std::string kind;
  is >> kind;
  std::vector<double> p;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t pos = 0;
      p.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      rd.fail("phantom", key, "bad number '" + tok + "'");
    }
  }
  if (kind == "gaussian") {
    if (p.size() != 4) rd.fail("phantom", key, "gaussian takes cx cy sigma amp");
    if (!(p[2] > 0.0)) rd.fail("phantom", key, "sigma must be > 0");
    return phantom::Gaussian{{p[0], p[1]}, p[2], p[3]};
  }
  if (kind == "disc") {
    if (p.size() != 5) rd.fail("phantom", key, "disc takes cx cy radius taper amp");
    if (!(p[2] > 0.0) || !(p[3] > 0.0) || p[3] > p[2]) rd.fail("phantom", key, "need 0 < taper <= radius");
    return phantom::SmoothedDisc{{p[0], p[1]}, p[2], p[3], p[4]};
  }
  rd.fail("phantom", key, "unknown component kind '" + kind + "' (gaussian or disc)");
}

}  // namespace

PmlProfile ExperimentConfig::pml(const Grid2D& g) const {
  return pml_profile(g, pml_width, pml_sigma_max, pml_order, detector.extent());
}

Aperture ExperimentConfig::aperture() const {
  Aperture a;
  a.t_min = u_min;
  a.t_max = u_max;
  a.full_circle = detector.full_circle;
  a.arc_begin = detector.arc_begin;
  a.arc_end = detector.arc_end;
  return a;
}

void ExperimentConfig::validate() const {
  auto wrap = [](const char* where, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(where) + ": " + e.what());
    }
  };
  wrap("grid", [&] { (void)grid(); });
  wrap("detector", [&] { detector.validate(); });
  wrap("detector", [&] {
    const Grid2D g = grid();
    check_detector_clearance(g, detector);
    (void)pml(g);
  });
  wrap("speed", [&] {
    if (const auto* c = std::get_if<speed::Constant>(&speed); c && !(c->c0 > 0.0)) {
      throw std::invalid_argument("c0 must be > 0");
    }
    (void)speed_value(speed, {0.0, 0.0});
  });
  wrap("phantom", [&] {
    if (!(phantom.margin > 0.0) || !(phantom.margin < 1.0)) throw std::invalid_argument("margin must be in (0, 1)");
    for (const auto& c : phantom.components) {
      const Vec2 centre = std::visit([](const auto& x) { return x.center; }, c);
      const double reach = centre.norm() + ctat::support_radius(c);
      if (reach > 1.0 - phantom.margin) {
        throw std::invalid_argument("component support reaches |x| = " + std::to_string(reach) + " > 1 - margin");
      }
    }
  });
  wrap("time", [&] {
    if (!(detector.record_time > 0.0)) throw std::invalid_argument("T must be > 0");
    if (!(chi_T > 0.0 && chi_T < chi_T1 && chi_T1 <= detector.record_time + 1e-12)) {
      throw std::invalid_argument("need 0 < chi_T < chi_T1 <= T");
    }
  });
  wrap("aperture", [&] {
    if (!(u_min >= 0.0 && u_max > u_min)) throw std::invalid_argument("need 0 <= t_min < t_max");
  });
  wrap("recon", [&] {
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (step < 0.0) throw std::invalid_argument("step must be >= 0 (0 = automatic)");
    if (!(tol >= 0.0)) throw std::invalid_argument("tol must be >= 0");
    if (tikhonov < 0.0) throw std::invalid_argument("tikhonov must be >= 0");
    if (!(support_radius > 0.0 && support_radius <= 1.0)) throw std::invalid_argument("support_radius in (0, 1]");
    if (norm_iters < 10) throw std::invalid_argument("norm_iters must be >= 10");
  });
  wrap("noise", [&] {
    if (noise_relative < 0.0) throw std::invalid_argument("relative must be >= 0");
  });
  wrap("visibility", [&] {
    if (!(edge_threshold > 0.0 && edge_threshold < 1.0)) throw std::invalid_argument("edge_threshold in (0, 1)");
    if (!(vis.position_tol > 0.0) || !(vis.angle_tol_deg > 0.0)) throw std::invalid_argument("tolerances must be > 0");
    if (!(vis.h_ray > 0.0) || !(vis.t_max > 0.0)) throw std::invalid_argument("h_ray and t_max must be > 0");
  });
  wrap("sweep", [&] {
    if (sweep_levels < 2) throw std::invalid_argument("levels must be >= 2");
    if (sweep_n0 < 33 || sweep_n0 % 2 == 0) throw std::invalid_argument("n0 must be odd and >= 33");
  });
}

nlohmann::json detector_to_json(const DetectorConfig& c) {
  nlohmann::json j;
  j["mode"] = to_string(c.mode);
  j["R"] = c.R;
  j["r"] = c.r;
  j["n_theta"] = c.n_theta;
  j["n_alpha"] = c.n_alpha;
  j["record_time"] = c.record_time;
  j["cfl"] = c.cfl;
  j["full_circle"] = c.full_circle;
  j["arc_begin"] = c.arc_begin;
  j["arc_end"] = c.arc_end;
  return j;
}

DetectorConfig detector_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  c.mode = detector_mode_from_string(j.at("mode").get<std::string>());
  c.R = j.at("R").get<double>();
  c.r = j.at("r").get<double>();
  c.n_theta = j.at("n_theta").get<int>();
  c.n_alpha = j.at("n_alpha").get<int>();
  c.record_time = j.at("record_time").get<double>();
  c.cfl = j.at("cfl").get<double>();
  c.full_circle = j.at("full_circle").get<bool>();
  c.arc_begin = j.at("arc_begin").get<double>();
  c.arc_end = j.at("arc_end").get<double>();
  return c;
}

nlohmann::json ExperimentConfig::detector_json() const { return detector_to_json(detector); }

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ptree pt;
  try {
    std::istringstream is(text);
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  check_keys(pt, origin);
  const Reader rd(pt, origin);
  ExperimentConfig c;

  c.half_width = rd.num("grid", "half_width", c.half_width);
  c.n = static_cast<int>(rd.integer("grid", "n", c.n));
  c.pml_width = rd.num("grid", "pml_width", c.pml_width);
  c.pml_sigma_max = rd.num("grid", "pml_sigma_max", c.pml_sigma_max);
  c.pml_order = static_cast<int>(rd.integer("grid", "pml_order", c.pml_order));

  const std::string kind = rd.text("speed", "kind", "paper_default");
  if (kind == "paper_default") {
    speed::PaperDefault s;
    s.amplitude = rd.num("speed", "amplitude", s.amplitude);
    s.eta_taper = rd.num("speed", "eta_taper", s.eta_taper);
    c.speed = s;
  } else if (kind == "constant") {
    c.speed = speed::Constant{rd.num("speed", "c0", 1.0)};
  } else if (kind == "radial_bump") {
    speed::RadialBump s;
    s.a = rd.num("speed", "a", s.a);
    s.sigma = rd.num("speed", "sigma", s.sigma);
    s.eta_taper = rd.num("speed", "eta_taper", s.eta_taper);
    c.speed = s;
  } else {
    rd.fail("speed", "kind", "expected paper_default, constant or radial_bump, got '" + kind + "'");
  }

  c.phantom.margin = rd.num("phantom", "margin", c.phantom.margin);
  if (const ptree* ph = rd.section("phantom")) {
    std::map<long, std::pair<std::string, std::string>> comps;
    for (const auto& [key, val] : *ph) {
      if (key == "margin") continue;
      comps[std::stol(key.substr(9))] = {key, trim(val.data())};
    }
    for (const auto& [idx, kv] : comps) c.phantom.components.push_back(parse_component(rd, kv.first, kv.second));
  }
  c.has_phantom = !c.phantom.components.empty();

  const std::string mode = rd.text("detector", "mode", "large");
  if (mode == "small") {
    c.detector = DetectorConfig::small(2.0, 0.8);
  } else if (mode == "large") {
    c.detector = DetectorConfig::large(2.0);
  } else {
    rd.fail("detector", "mode", "expected small or large, got '" + mode + "'");
  }
  c.detector.R = rd.num("detector", "R", c.detector.R);
  c.detector.r = rd.num("detector", "r", c.detector.r);
  c.detector.n_theta = static_cast<int>(rd.integer("detector", "n_theta", c.detector.n_theta));
  c.detector.n_alpha = static_cast<int>(rd.integer("detector", "n_alpha", c.detector.n_alpha));
  c.detector.cfl = rd.num("detector", "cfl", c.detector.cfl);
  const auto ab = rd.raw("detector", "arc_begin_deg"), ae = rd.raw("detector", "arc_end_deg");
  if (ab.has_value() != ae.has_value()) {
    rd.fail("detector", ab ? "arc_end_deg" : "arc_begin_deg", "arc_begin_deg and arc_end_deg go together");
  }
  if (ab) {
    c.detector.full_circle = false;
    c.detector.arc_begin = rd.num("detector", "arc_begin_deg", 0.0) * kPi / 180.0;
    c.detector.arc_end = rd.num("detector", "arc_end_deg", 0.0) * kPi / 180.0;
    if (!(c.detector.arc_end > c.detector.arc_begin) || c.detector.arc_end - c.detector.arc_begin > 2 * kPi) {
      rd.fail("detector", "arc_end_deg", "need arc_begin_deg < arc_end_deg <= arc_begin_deg + 360");
    }
  }
  const std::string interp = rd.text("detector", "interpolation", "bilinear");
  if (interp == "bilinear") {
    c.interpolation = Interpolation::Bilinear;
  } else if (interp == "cubic") {
    c.interpolation = Interpolation::Cubic;
  } else {
    rd.fail("detector", "interpolation", "expected bilinear or cubic");
  }

  c.detector.record_time = rd.num("time", "T", c.detector.record_time);
  c.chi_T1 = rd.num("time", "chi_T1", c.detector.record_time);
  c.chi_T = rd.num("time", "chi_T", 0.9 * c.chi_T1);

  c.u_min = rd.num("aperture", "t_min", 0.0);
  c.u_max = rd.num("aperture", "t_max", c.detector.record_time);

  const std::string method = rd.text("recon", "method", "landweber");
  if (method == "landweber") {
    c.method = ReconMethod::Landweber;
  } else if (method == "cg") {
    c.method = ReconMethod::Cg;
  } else {
    rd.fail("recon", "method", "expected landweber or cg");
  }
  c.iterations = static_cast<int>(rd.integer("recon", "iterations", c.method == ReconMethod::Cg ? 15 : 50));
  c.step = rd.num("recon", "step", c.step);
  c.tol = rd.num("recon", "tol", c.tol);
  c.tikhonov = rd.num("recon", "tikhonov", c.tikhonov);
  c.support_radius = rd.num("recon", "support_radius", c.support_radius);
  c.norm_iters = static_cast<int>(rd.integer("recon", "norm_iters", c.norm_iters));

  c.noise_relative = rd.num("noise", "relative", c.noise_relative);

  c.edge_threshold = rd.num("visibility", "edge_threshold", c.edge_threshold);
  c.vis.position_tol = rd.num("visibility", "position_tol", c.vis.position_tol);
  c.vis.angle_tol_deg = rd.num("visibility", "angle_tol_deg", c.vis.angle_tol_deg);
  c.vis.t_max = rd.num("visibility", "t_max", c.vis.t_max);
  c.vis.h_ray = rd.num("visibility", "h_ray", c.vis.h_ray);
  const std::string sides = rd.text("visibility", "sides", "both");
  if (sides == "both") {
    c.vis.sides = LargeSides::Both;
  } else if (sides == "exit") {
    c.vis.sides = LargeSides::Exit;
  } else {
    rd.fail("visibility", "sides", "expected both or exit");
  }

  c.sweep_levels = static_cast<int>(rd.integer("sweep", "levels", c.sweep_levels));
  c.sweep_n0 = static_cast<int>(rd.integer("sweep", "n0", c.sweep_n0));

  const long seed = rd.integer("run", "seed", 1);
  if (seed < 0) rd.fail("run", "seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.output_dir = rd.text("run", "output_dir", c.output_dir);

  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config not found: " + path);
  std::ifstream in(path);
  if (!in) throw ConfigError("config not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace ctat
