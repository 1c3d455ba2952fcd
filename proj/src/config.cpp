#include "qcl/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "qcl/error.hpp"

namespace qcl {

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Read-only view of one JSON object with its key path, for error messages.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const std::string& key) const {
    if (!has(key)) throw ConfigError(join(path_, key), "missing required key");
    return j_.at(key);
  }
  Node child(const std::string& key) const { return Node(raw(key), join(path_, key)); }

  double number(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(join(path_, key), "expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  long integer(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(join(path_, key), "expected an integer");
    return v.get<long>();
  }
  long integer(const std::string& key, long fallback) const { return has(key) ? integer(key) : fallback; }
  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(join(path_, key), "expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(join(path_, key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }
  // A number is accepted as a one-element list.
  std::vector<double> numbers(const std::string& key) const {
    const auto& v = raw(key);
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw ConfigError(join(path_, key), "expected a number or a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ConfigError(join(path_, key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    return has(key) ? numbers(key) : fallback;
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!ok.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
};

std::vector<double> per_axis(std::vector<double> v, int dim, const std::string& key) {
  if (v.size() == 1 && dim > 1) v.assign(dim, v[0]);
  if (static_cast<int>(v.size()) != dim)
    throw ConfigError(key, "expected " + std::to_string(dim) + " entries, got " + std::to_string(v.size()));
  return v;
}

SmoothSurface surface_from(const Node& n) {
  const std::string kind = n.string("kind");
  if (kind == "zero") {
    n.allow_only({"kind"});
    return surface::Zero{};
  }
  if (kind == "harmonic") {
    n.allow_only({"kind", "stiffness"});
    return surface::Harmonic{n.numbers("stiffness", {1.0})};
  }
  if (kind == "quartic") {
    n.allow_only({"kind", "a"});
    return surface::Quartic{n.number("a", 1.0)};
  }
  if (kind == "soft_coulomb") {
    n.allow_only({"kind", "c", "soft_core"});
    return surface::SoftCoulomb{n.number("c", 1.0), n.number("soft_core", 1.0)};
  }
  if (kind == "crossing_cone") {
    n.allow_only({"kind", "c", "apex"});
    return surface::CrossingCone{n.number("c", 1.0), n.numbers("apex", {})};
  }
  if (kind == "dimer_radial") {
    n.allow_only({"kind", "depth", "range", "r_eq"});
    return surface::DimerRadial{n.number("depth", 1.0), n.number("range", 1.0), n.number("r_eq", 1.0)};
  }
  throw ConfigError(join(n.path(), "kind"), "unknown surface kind '" + kind + "'");
}

SamplingMode mode_from(const std::string& s, const std::string& key) {
  if (s == "delta_limit") return SamplingMode::kDeltaLimit;
  if (s == "husimi") return SamplingMode::kHusimiAtEps;
  if (s == "wigner_quadrature") return SamplingMode::kWignerQuadrature;
  throw ConfigError(key, "unknown mode '" + s + "' (delta_limit, husimi, wigner_quadrature)");
}

TestFunction probe_from(const Node& n, int dim) {
  n.allow_only({"id", "x0", "p0", "sx", "sp", "amplitude"});
  TestFunction phi;
  phi.id = n.string("id");
  phi.x0 = per_axis(n.numbers("x0"), dim, join(n.path(), "x0"));
  phi.p0 = per_axis(n.numbers("p0"), dim, join(n.path(), "p0"));
  phi.sx = per_axis(n.numbers("sx"), dim, join(n.path(), "sx"));
  phi.sp = per_axis(n.numbers("sp"), dim, join(n.path(), "sp"));
  phi.amplitude = n.number("amplitude", 1.0);
  try {
    phi.validate();
  } catch (const Error& e) {
    throw ConfigError(n.path(), e.what());
  }
  return phi;
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Grid GridRule::grid_for(int dim, double eps, double p_max_auto) const {
  const double pm = p_max.value_or(p_max_auto);
  Grid g;
  for (int i = 0; i < dim; ++i) {
    const double L = extent[i];
    const int n = points ? *points : points_for_resolution(L, eps, pm, min_points);
    g.lower.push_back(-0.5 * L);
    g.extent.push_back(L);
    g.points.push_back(n);
    g.stagger.push_back(stagger.empty() ? 0.0 : stagger[i]);
  }
  g.validate();
  return g;
}

PotentialSpec potential_from_json(const json& j, const std::string& path) {
  const Node n(j, path);
  n.allow_only({"layout", "dim", "nuclei", "smooth", "pairs", "guard_radius"});
  const std::string kind = n.string("layout");
  Layout layout;
  if (kind == "flat") {
    layout = Layout::flat(static_cast<int>(n.integer("dim")));
  } else if (kind == "nuclear") {
    layout = Layout::nuclear(static_cast<int>(n.integer("nuclei")));
  } else if (kind == "relative") {
    layout = Layout::relative();
  } else {
    throw ConfigError(join(path, "layout"), "unknown layout '" + kind + "' (flat, nuclear, relative)");
  }
  const SmoothSurface smooth = n.has("smooth") ? surface_from(n.child("smooth")) : SmoothSurface{};
  std::vector<PairInteraction> pairs;
  if (n.has("pairs")) {
    const auto& arr = n.raw("pairs");
    if (!arr.is_array()) throw ConfigError(join(path, "pairs"), "expected a list");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const Node p(arr[i], join(path, "pairs") + "[" + std::to_string(i) + "]");
      p.allow_only({"alpha", "beta", "c"});
      pairs.push_back({static_cast<int>(p.integer("alpha", 0)), static_cast<int>(p.integer("beta", 1)),
                       p.number("c")});
    }
  }
  try {
    return PotentialSpec(layout, smooth, pairs,
                         n.number("guard_radius", PotentialSpec::kDefaultGuardRadius));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

json potential_to_json(const PotentialSpec& spec) {
  json j;
  const auto& l = spec.layout();
  switch (l.kind) {
    case LayoutKind::kFlat:
      j["layout"] = "flat";
      j["dim"] = l.dim;
      break;
    case LayoutKind::kNuclear:
      j["layout"] = "nuclear";
      j["nuclei"] = l.nuclei;
      break;
    case LayoutKind::kRelative:
      j["layout"] = "relative";
      break;
  }
  json s;
  if (auto* h = std::get_if<surface::Harmonic>(&spec.smooth())) {
    s = {{"kind", "harmonic"}, {"stiffness", h->stiffness}};
  } else if (auto* q = std::get_if<surface::Quartic>(&spec.smooth())) {
    s = {{"kind", "quartic"}, {"a", q->a}};
  } else if (auto* c = std::get_if<surface::SoftCoulomb>(&spec.smooth())) {
    s = {{"kind", "soft_coulomb"}, {"c", c->c}, {"soft_core", c->soft_core}};
  } else if (auto* k = std::get_if<surface::CrossingCone>(&spec.smooth())) {
    s = {{"kind", "crossing_cone"}, {"c", k->c}, {"apex", k->apex}};
  } else if (auto* d = std::get_if<surface::DimerRadial>(&spec.smooth())) {
    s = {{"kind", "dimer_radial"}, {"depth", d->depth}, {"range", d->range}, {"r_eq", d->r_eq}};
  } else {
    s = {{"kind", "zero"}};
  }
  j["smooth"] = s;
  j["pairs"] = json::array();
  for (const auto& p : spec.pairs()) j["pairs"].push_back({{"alpha", p.alpha}, {"beta", p.beta}, {"c", p.c}});
  j["guard_radius"] = spec.guard_radius();
  return j;
}

std::uint64_t potential_hash(const PotentialSpec& spec) { return fnv1a(potential_to_json(spec).dump()); }

json packet_to_json(const PacketSpec& spec) {
  return {{"x0", spec.x0}, {"p0", spec.p0}, {"alpha", spec.alpha}, {"sigma", spec.sigma},
          {"chirp", spec.chirp}};
}

json probe_to_json(const TestFunction& phi) {
  return {{"id", phi.id}, {"x0", phi.x0}, {"p0", phi.p0}, {"sx", phi.sx},
          {"sp", phi.sp}, {"amplitude", phi.amplitude}};
}

std::string ExperimentConfig::hash() const {
  // Thread count and output location do not change results.
  json j = source;
  j.erase("threads");
  j.erase("output");
  return hex64(fnv1a(j.dump()));
}

ExperimentConfig parse_config(const json& j) {
  const Node root(j, "");
  root.allow_only({"name", "potential", "packet", "eps", "time", "dt_coefficient", "grid",
                   "dictionary", "classical", "estimates", "remainder", "boundary_threshold",
                   "output", "threads", "seed", "extras"});
  ExperimentConfig cfg;
  cfg.source = j;
  cfg.name = root.string("name", "experiment");
  if (cfg.name.empty() || cfg.name.find_first_of("/\\") != std::string::npos)
    throw ConfigError("name", "must be a non-empty plain name");

  cfg.potential = potential_from_json(root.raw("potential"), "potential");
  const int d = cfg.potential.dim();

  {
    const Node p = root.child("packet");
    p.allow_only({"x0", "p0", "alpha", "sigma", "chirp"});
    cfg.packet.x0 = per_axis(p.numbers("x0"), d, "packet.x0");
    cfg.packet.p0 = per_axis(p.numbers("p0"), d, "packet.p0");
    cfg.packet.alpha = p.number("alpha", 0.5);
    cfg.packet.sigma = p.numbers("sigma", {1.0});
    cfg.packet.chirp = p.numbers("chirp", {});
    try {
      cfg.packet.validate(d);
    } catch (const Error& e) {
      throw ConfigError("packet", e.what());
    }
  }

  cfg.eps = root.numbers("eps");
  if (cfg.eps.empty()) throw ConfigError("eps", "needs at least one value");
  for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
    if (!(cfg.eps[i] > 0.0 && cfg.eps[i] <= 1.0))
      throw ConfigError("eps", "values must lie in (0, 1]");
    if (i && !(cfg.eps[i] < cfg.eps[i - 1])) throw ConfigError("eps", "values must decrease strictly");
  }

  {
    const Node t = root.child("time");
    t.allow_only({"final", "snapshots", "snapshot_count"});
    cfg.final_time = t.number("final");
    if (!(cfg.final_time >= 0.0)) throw ConfigError("time.final", "must be >= 0");
    if (t.has("snapshots")) {
      cfg.snapshots = t.numbers("snapshots");
    } else {
      const long n = t.integer("snapshot_count", 1);
      if (n < 1) throw ConfigError("time.snapshot_count", "must be >= 1");
      if (cfg.final_time == 0.0) cfg.snapshots = {0.0};
      else
        for (long k = 0; k <= n; ++k) cfg.snapshots.push_back(cfg.final_time * k / n);
    }
    for (std::size_t i = 0; i < cfg.snapshots.size(); ++i) {
      const double s = cfg.snapshots[i];
      if (s < 0.0 || s > cfg.final_time * (1 + 1e-12))
        throw ConfigError("time.snapshots", "times must lie in [0, final]");
      if (i && !(s > cfg.snapshots[i - 1])) throw ConfigError("time.snapshots", "times must increase");
    }
    if (cfg.snapshots.empty()) throw ConfigError("time.snapshots", "needs at least one time");
  }

  cfg.dt_coefficient = root.number("dt_coefficient", kDefaultTimestepCoefficient);
  if (!(cfg.dt_coefficient > 0.0 && cfg.dt_coefficient <= kDefaultTimestepCoefficient))
    throw ConfigError("dt_coefficient", "must lie in (0, 0.01]");

  {
    const Node g = root.child("grid");
    g.allow_only({"extent", "points", "min_points", "p_max", "stagger"});
    cfg.grid.extent = per_axis(g.numbers("extent"), d, "grid.extent");
    for (double L : cfg.grid.extent)
      if (!(L > 0.0)) throw ConfigError("grid.extent", "must be > 0");
    if (g.has("points")) {
      const long n = g.integer("points");
      if (n < 2 || !is_power_of_two(static_cast<int>(n)))
        throw ConfigError("grid.points", "must be a power of two >= 2");
      cfg.grid.points = static_cast<int>(n);
    }
    const long mp = g.integer("min_points", 32);
    if (mp < 2) throw ConfigError("grid.min_points", "must be >= 2");
    cfg.grid.min_points = static_cast<int>(mp);
    if (g.has("p_max")) {
      cfg.grid.p_max = g.number("p_max");
      if (!(*cfg.grid.p_max > 0.0)) throw ConfigError("grid.p_max", "must be > 0");
    }
    if (g.has("stagger")) {
      cfg.grid.stagger = per_axis(g.numbers("stagger"), d, "grid.stagger");
      for (double s : cfg.grid.stagger)
        if (s < 0.0 || s >= 1.0) throw ConfigError("grid.stagger", "must lie in [0, 1)");
    } else if (cfg.potential.layout().kind != LayoutKind::kFlat) {
      // No node on S: 0.5 per axis, and a different offset per nucleus.
      const int m = std::max(1, cfg.potential.layout().nuclei);
      for (int i = 0; i < d; ++i) cfg.grid.stagger.push_back(0.5 * (1.0 - double(i / 3) / m));
    }
  }

  if (root.has("dictionary")) {
    const Node n = root.child("dictionary");
    n.allow_only({"lattice", "trajectory", "probes", "sx", "sp", "exclude_nonsmooth"});
    auto& dr = cfg.dictionary;
    if (n.has("lattice")) {
      const Node l = n.child("lattice");
      l.allow_only({"counts", "x_center", "x_half", "p_center", "p_half"});
      LatticeRule lr;
      lr.counts = static_cast<int>(l.integer("counts", 3));
      if (lr.counts < 1) throw ConfigError("dictionary.lattice.counts", "must be >= 1");
      auto opt = [&](const char* key) {
        return l.has(key) ? per_axis(l.numbers(key), d, std::string("dictionary.lattice.") + key)
                          : std::vector<double>{};
      };
      lr.x_center = opt("x_center");
      lr.x_half = opt("x_half");
      lr.p_center = opt("p_center");
      lr.p_half = opt("p_half");
      dr.lattice = lr;
    }
    if (n.has("trajectory")) {
      const Node t = n.child("trajectory");
      t.allow_only({"count"});
      dr.trajectory_count = static_cast<int>(t.integer("count"));
      if (dr.trajectory_count < 1) throw ConfigError("dictionary.trajectory.count", "must be >= 1");
    }
    if (n.has("sx")) dr.sx = per_axis(n.numbers("sx"), d, "dictionary.sx");
    if (n.has("sp")) dr.sp = per_axis(n.numbers("sp"), d, "dictionary.sp");
    for (double v : dr.sx)
      if (!(v > 0.0)) throw ConfigError("dictionary.sx", "must be > 0");
    for (double v : dr.sp)
      if (!(v > 0.0)) throw ConfigError("dictionary.sp", "must be > 0");
    if (n.has("probes")) {
      const auto& arr = n.raw("probes");
      if (!arr.is_array()) throw ConfigError("dictionary.probes", "expected a list");
      for (std::size_t i = 0; i < arr.size(); ++i)
        dr.probes.push_back(probe_from(Node(arr[i], "dictionary.probes[" + std::to_string(i) + "]"), d));
    }
    dr.exclude_nonsmooth = n.boolean("exclude_nonsmooth", true);
    if (dr.empty()) throw ConfigError("dictionary", "dictionary is empty");
  }

  if (root.has("classical")) {
    const Node c = root.child("classical");
    c.allow_only({"mode", "n", "seed", "dt", "eta"});
    cfg.classical.mode = mode_from(c.string("mode", "delta_limit"), "classical.mode");
    cfg.classical.n = static_cast<int>(c.integer("n", cfg.classical.mode == SamplingMode::kDeltaLimit ? 1 : 1000));
    if (cfg.classical.n < 1) throw ConfigError("classical.n", "must be >= 1");
    cfg.classical.seed = static_cast<std::uint64_t>(c.integer("seed", 1));
    cfg.classical.dt = c.number("dt", 1e-3);
    if (!(cfg.classical.dt > 0.0)) throw ConfigError("classical.dt", "must be > 0");
    cfg.classical.eta = c.number("eta", 0.05);
    if (!(cfg.classical.eta > 0.0)) throw ConfigError("classical.eta", "must be > 0");
  }

  if (root.has("estimates")) {
    const Node e = root.child("estimates");
    e.allow_only({"deltas", "radii"});
    cfg.deltas = e.numbers("deltas", {});
    cfg.radii = e.numbers("radii", {});
    for (double v : cfg.deltas)
      if (!(v > 0.0)) throw ConfigError("estimates.deltas", "must be > 0");
    double half = kInf;
    for (double L : cfg.grid.extent) half = std::min(half, 0.5 * L);
    for (double v : cfg.radii)
      if (!(v > 0.0) || v > half) throw ConfigError("estimates.radii", "must lie in (0, L/2]");
  }

  cfg.remainder = root.boolean("remainder", false);
  cfg.boundary_threshold = root.number("boundary_threshold", 1e-6);
  if (!(cfg.boundary_threshold > 0.0)) throw ConfigError("boundary_threshold", "must be > 0");

  cfg.output = std::filesystem::path("runs") / cfg.name;
  if (root.has("output")) {
    const Node o = root.child("output");
    o.allow_only({"directory", "fields"});
    if (o.has("directory")) cfg.output = o.string("directory");
    cfg.write_fields = o.boolean("fields", false);
  }
  cfg.threads = static_cast<int>(root.integer("threads", 1));
  if (cfg.threads < 1) throw ConfigError("threads", "must be >= 1");
  cfg.seed = static_cast<std::uint64_t>(root.integer("seed", 1));
  if (root.has("extras")) {
    cfg.extras = root.raw("extras");
    if (!cfg.extras.is_object()) throw ConfigError("extras", "expected an object");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.classical.seed = seed;
  cfg.source["seed"] = seed;
  if (cfg.source.contains("classical")) cfg.source["classical"]["seed"] = seed;
}

void require_sweepable(const ExperimentConfig& cfg) {
  if (cfg.dictionary.empty()) throw ConfigError("dictionary", "a sweep needs a non-empty dictionary");
}

}  // namespace qcl
