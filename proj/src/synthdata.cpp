#include "cosa/synthdata.hpp"

#include "cosa/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

namespace cosa {

namespace {

constexpr std::array<std::string_view, kNumShapeKinds> kShapeNames = {
    "sphere", "cube", "cylinder", "cone", "torus", "pyramid", "disk", "capsule"};

constexpr double kPi = std::numbers::pi;
constexpr double kGolden = 0.6180339887498949;  // (sqrt(5) - 1) / 2

using Vec3 = Eigen::RowVector3d;

// One area-preserving map from the unit square onto a surface patch.
struct Patch {
  double area;
  std::function<Vec3(double, double)> map;
};

// Uniform point on the triangle (a, b, c) from (u, v) in [0,1)^2.
Vec3 triangle_point(const Vec3& a, const Vec3& b, const Vec3& c, double u, double v) {
  const double su = std::sqrt(u);
  return (1.0 - su) * a + su * (1.0 - v) * b + su * v * c;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

// Tube angle with density proportional to (R + r cos psi), by bisection on the CDF.
double torus_tube_angle(double major, double minor, double v) {
  const double target = v * 2.0 * kPi * major;
  double lo = 0.0, hi = 2.0 * kPi;
  for (int it = 0; it < 64; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (major * mid + minor * std::sin(mid) < target) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Patches covering the sampled region. For centrally symmetric shapes this is one
// half of the surface; the other half comes from the antipodes.
std::vector<Patch> shape_patches(const ShapeInstance& s, bool& symmetric) {
  std::vector<Patch> patches;
  symmetric = true;
  switch (s.kind) {
    case ShapeKind::sphere:
      // Archimedes: height-uniform is area-uniform. Upper hemisphere.
      patches.push_back({2.0 * kPi, [](double u, double v) {
                           const double z = u, phi = 2.0 * kPi * v, r = std::sqrt(1.0 - z * z);
                           return Vec3(r * std::cos(phi), r * std::sin(phi), z);
                         }});
      break;
    case ShapeKind::cube:
      // Faces +x, +y, +z.
      for (int axis = 0; axis < 3; ++axis) {
        patches.push_back({4.0, [axis](double u, double v) {
                             Vec3 p;
                             p(axis) = 1.0;
                             p((axis + 1) % 3) = 2.0 * u - 1.0;
                             p((axis + 2) % 3) = 2.0 * v - 1.0;
                             return p;
                           }});
      }
      break;
    case ShapeKind::cylinder: {
      // Radius 1, half height h; half of the side plus the top cap.
      const double h = s.param;
      patches.push_back({kPi * 2.0 * h, [h](double u, double v) {
                           const double phi = kPi * u;
                           return Vec3(std::cos(phi), std::sin(phi), -h + 2.0 * h * v);
                         }});
      patches.push_back({kPi, [h](double u, double v) {
                           const double r = std::sqrt(u), t = 2.0 * kPi * v;
                           return Vec3(r * std::cos(t), r * std::sin(t), h);
                         }});
      break;
    }
    case ShapeKind::cone: {
      // Base radius 1 at z = 0, apex at z = height.
      symmetric = false;
      const double height = s.param;
      const double slant = std::sqrt(1.0 + height * height);
      patches.push_back({kPi * slant, [height](double u, double v) {
                           // Lateral area grows linearly with distance from the apex.
                           const double frac = std::sqrt(u), t = 2.0 * kPi * v;
                           return Vec3(frac * std::cos(t), frac * std::sin(t), height * (1.0 - frac));
                         }});
      patches.push_back({kPi, [](double u, double v) {
                           const double r = std::sqrt(u), t = 2.0 * kPi * v;
                           return Vec3(r * std::cos(t), r * std::sin(t), 0.0);
                         }});
      break;
    }
    case ShapeKind::torus: {
      // Major radius 1, tube radius param; half the sweep.
      const double minor = s.param;
      patches.push_back({2.0 * kPi * kPi * minor, [minor](double u, double v) {
                           const double phi = kPi * u;
                           const double psi = torus_tube_angle(1.0, minor, v);
                           const double ring = 1.0 + minor * std::cos(psi);
                           return Vec3(ring * std::cos(phi), ring * std::sin(phi), minor * std::sin(psi));
                         }});
      break;
    }
    case ShapeKind::pyramid: {
      // Square base [-1,1]^2 at z = 0, apex at z = height.
      symmetric = false;
      const double height = s.param;
      const Vec3 apex(0.0, 0.0, height);
      const std::array<Vec3, 4> base = {Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(1, 1, 0), Vec3(-1, 1, 0)};
      for (int f = 0; f < 4; ++f) {
        const Vec3 a = base[f], b = base[(f + 1) % 4];
        patches.push_back({triangle_area(apex, a, b),
                           [apex, a, b](double u, double v) { return triangle_point(apex, a, b, u, v); }});
      }
      patches.push_back({4.0, [](double u, double v) { return Vec3(2.0 * u - 1.0, 2.0 * v - 1.0, 0.0); }});
      break;
    }
    case ShapeKind::disk: {
      // Flat ellipse with semi-axes 1 and param; half the angular range.
      const double b = s.param;
      patches.push_back({0.5 * kPi * b, [b](double u, double v) {
                           const double r = std::sqrt(u), t = kPi * v;
                           return Vec3(r * std::cos(t), b * r * std::sin(t), 0.0);
                         }});
      break;
    }
    case ShapeKind::capsule: {
      // Radius 0.5 cylinder of half length param with hemispherical ends.
      constexpr double rho = 0.5;
      const double h = s.param;
      patches.push_back({kPi * rho * 2.0 * h, [h](double u, double v) {
                           const double phi = kPi * u;
                           return Vec3(rho * std::cos(phi), rho * std::sin(phi), -h + 2.0 * h * v);
                         }});
      patches.push_back({2.0 * kPi * rho * rho, [h](double u, double v) {
                           const double z = rho * u, phi = 2.0 * kPi * v;
                           const double r = std::sqrt(rho * rho - z * z);
                           return Vec3(r * std::cos(phi), r * std::sin(phi), h + z);
                         }});
      break;
    }
  }
  return patches;
}

double canonical_param(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::cylinder: return 0.9;   // half height
    case ShapeKind::cone: return 1.8;       // height
    case ShapeKind::torus: return 0.35;     // tube radius
    case ShapeKind::pyramid: return 1.5;    // height
    case ShapeKind::disk: return 0.85;      // minor semi-axis
    case ShapeKind::capsule: return 0.75;   // half length of the straight part
    default: return 0.0;
  }
}

// Max of a list of constraint violations: 0 iff the point lies on that patch.
double on_patch(std::initializer_list<double> violations) {
  double worst = 0.0;
  for (double v : violations) worst = std::max(worst, v);
  return worst;
}

double above(double value, double bound) { return std::max(0.0, value - bound); }

}  // namespace

std::string_view shape_name(ShapeKind kind) { return kShapeNames[static_cast<int>(kind)]; }

ShapeKind shape_from_name(std::string_view name) {
  for (int i = 0; i < kNumShapeKinds; ++i) {
    if (kShapeNames[i] == name) return static_cast<ShapeKind>(i);
  }
  throw PreconditionError("unknown shape kind: " + std::string(name));
}

ShapeKind shape_from_index(int index) {
  require(index >= 0 && index < kNumShapeKinds, "shape index out of range");
  return static_cast<ShapeKind>(index);
}

SurfaceSample sample_surface(ShapeKind kind, int n, std::uint64_t seed) {
  require(n >= 4, "generate_shape: n must be at least 4");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SurfaceSample out;
  out.shape = ShapeInstance{kind, canonical_param(kind)};

  bool symmetric = true;
  const auto patches = shape_patches(out.shape, symmetric);
  double total = 0.0;
  for (const auto& p : patches) total += p.area;

  // Randomly shifted rank-1 lattice on the unit square: every point is marginally
  // uniform, and the set is stratified.
  const int base = symmetric ? (n + 1) / 2 : n;
  const double shift_u = unif(rng), shift_v = unif(rng);
  Points pts(symmetric ? 2 * base : base, 3);
  for (int k = 0; k < base; ++k) {
    double u = std::fmod((k + 0.5) / base + shift_u, 1.0);
    const double v = std::fmod(k * kGolden + shift_v, 1.0);
    // Pick the patch owning this slab of u, then rescale u into [0, 1).
    double acc = 0.0;
    std::size_t which = patches.size() - 1;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      const double frac = patches[i].area / total;
      if (u < acc + frac || i + 1 == patches.size()) {
        which = i;
        u = std::clamp((u - acc) / frac, 0.0, std::nextafter(1.0, 0.0));
        break;
      }
      acc += frac;
    }
    pts.row(k) = patches[which].map(u, v);
  }
  if (symmetric) pts.bottomRows(base) = -pts.topRows(base);
  out.points = pts.topRows(n);
  return out;
}

double surface_residual(const ShapeInstance& s, const Eigen::RowVector3d& p) {
  const double x = p(0), y = p(1), z = p(2);
  const double r = std::hypot(x, y);
  switch (s.kind) {
    case ShapeKind::sphere:
      return std::abs(p.norm() - 1.0);
    case ShapeKind::cube:
      return std::abs(p.cwiseAbs().maxCoeff() - 1.0);
    case ShapeKind::cylinder: {
      const double h = s.param;
      return std::min(on_patch({std::abs(r - 1.0), above(std::abs(z), h)}),
                      on_patch({std::abs(std::abs(z) - h), above(r, 1.0)}));
    }
    case ShapeKind::cone: {
      const double height = s.param;
      const double lateral = on_patch({std::abs(r - (1.0 - z / height)), above(-z, 0.0), above(z, height)});
      const double base = on_patch({std::abs(z), above(r, 1.0)});
      return std::min(lateral, base);
    }
    case ShapeKind::torus: {
      const double minor = s.param;
      return std::abs(std::hypot(r - 1.0, z) - minor);
    }
    case ShapeKind::pyramid: {
      const double height = s.param;
      const double half = 1.0 - z / height;  // half width of the horizontal slice
      const double range = on_patch({above(-z, 0.0), above(z, height)});
      double best = on_patch({std::abs(z), above(std::abs(x), 1.0), above(std::abs(y), 1.0)});
      best = std::min(best, on_patch({range, std::abs(std::abs(x) - half), above(std::abs(y), half)}));
      best = std::min(best, on_patch({range, std::abs(std::abs(y) - half), above(std::abs(x), half)}));
      return best;
    }
    case ShapeKind::disk: {
      const double b = s.param;
      return on_patch({std::abs(z), above(std::hypot(x, y / b), 1.0)});
    }
    case ShapeKind::capsule: {
      constexpr double rho = 0.5;
      const double h = s.param;
      const double side = on_patch({std::abs(r - rho), above(std::abs(z), h)});
      const double cap = on_patch({std::abs(std::hypot(r, std::abs(z) - h) - rho), above(h, std::abs(z))});
      return std::min(side, cap);
    }
  }
  return 0.0;
}

PointCloud generate_shape(ShapeKind kind, int n, std::uint64_t seed, double jitter) {
  require(jitter >= 0.0, "generate_shape: jitter must be non-negative");
  auto sample = sample_surface(kind, n, seed);
  if (jitter > 0.0) {
    // Separate stream so the surface sample does not depend on the jitter.
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> noise(0.0, jitter);
    for (Eigen::Index i = 0; i < sample.points.rows(); ++i) {
      for (int c = 0; c < 3; ++c) sample.points(i, c) += noise(rng);
    }
  }
  return PointCloud(normalize(sample.points), static_cast<int>(kind));
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t class_index, std::uint64_t sample_index,
                       std::uint64_t split_tag) {
  // splitmix64 finalizer folded over the four fields.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(master);
  h = mix(h ^ class_index);
  h = mix(h ^ sample_index);
  h = mix(h ^ split_tag);
  return h;
}

// ---------------------------------------------------------------------------
// cosa-xyz files

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string format_cloud(const PointCloud& cloud) {
  std::string out = "cosa-xyz 1 " + std::to_string(cloud.size()) + " " +
                    std::to_string(cloud.label().value_or(-1)) + "\n";
  const auto& p = cloud.points();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    out += format_double(p(i, 0));
    out += ' ';
    out += format_double(p(i, 1));
    out += ' ';
    out += format_double(p(i, 2));
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

template <class T>
T parse_number(std::string_view tok, std::size_t line) {
  T value{};
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError("non-numeric token '" + std::string(tok) + "'", line);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ParseError("non-finite coordinate '" + std::string(tok) + "'", line);
  }
  return value;
}

}  // namespace

PointCloud parse_cloud(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  while (!lines.empty() && split_ws(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("empty file", 1);

  const auto header = split_ws(lines[0]);
  if (header.size() != 4 || header[0] != "cosa-xyz") throw ParseError("bad header, expected 'cosa-xyz 1 <n> <label>'", 1);
  if (parse_number<int>(header[1], 1) != 1) throw ParseError("unsupported cosa-xyz version", 1);
  const auto n = parse_number<long long>(header[2], 1);
  const auto label = parse_number<int>(header[3], 1);
  if (n < 1) throw ParseError("point count must be positive", 1);
  if (label < -1) throw ParseError("label must be -1 or a class index", 1);
  if (static_cast<long long>(lines.size()) - 1 != n) {
    throw ParseError("header declares " + std::to_string(n) + " points but file has " +
                         std::to_string(lines.size() - 1),
                     lines.size());
  }
  Points pts(n, 3);
  for (long long i = 0; i < n; ++i) {
    const std::size_t lineno = static_cast<std::size_t>(i) + 2;
    const auto tok = split_ws(lines[static_cast<std::size_t>(i) + 1]);
    if (tok.size() != 3) throw ParseError("expected 3 coordinates", lineno);
    for (int c = 0; c < 3; ++c) pts(i, c) = parse_number<double>(tok[c], lineno);
  }
  return PointCloud(std::move(pts), label >= 0 ? std::optional<int>(label) : std::nullopt);
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << format_cloud(cloud);
  if (!out) throw IoError("write failed: " + path.string());
}

PointCloud read_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_cloud(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

// ---------------------------------------------------------------------------
// dataset + manifest

namespace {

nlohmann::json entries_to_json(const std::vector<DatasetEntry>& entries) {
  auto arr = nlohmann::json::array();
  for (const auto& e : entries) arr.push_back({{"path", e.path}, {"label", e.label}, {"seed", e.seed}});
  return arr;
}

std::vector<DatasetEntry> entries_from_json(const nlohmann::json& arr) {
  std::vector<DatasetEntry> out;
  for (const auto& e : arr) {
    out.push_back({e.at("path").get<std::string>(), e.at("label").get<int>(), e.at("seed").get<std::uint64_t>()});
  }
  return out;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["Z"] = m.num_classes;
  j["n"] = m.n;
  j["jitter"] = m.jitter;
  j["master_seed"] = m.master_seed;
  j["train"] = entries_to_json(m.train);
  j["test"] = entries_to_json(m.test);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(1) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw ParseError("unsupported manifest version");
    m.num_classes = j.at("Z").get<int>();
    m.n = j.at("n").get<int>();
    m.jitter = j.at("jitter").get<double>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.train = entries_from_json(j.at("train"));
    m.test = entries_from_json(j.at("test"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  m.root = path.parent_path();
  return m;
}

DatasetManifest make_dataset(const DatasetConfig& cfg) {
  require(cfg.train_per_class >= 1 && cfg.test_per_class >= 1, "make_dataset: per-class counts must be >= 1");
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"train", "test"}) {
    fs::create_directories(cfg.out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (cfg.out_dir / sub).string() + ": " + ec.message());
  }
  DatasetManifest m;
  m.n = cfg.n;
  m.jitter = cfg.jitter;
  m.master_seed = cfg.master_seed;
  m.root = cfg.out_dir;
  auto emit = [&](const char* split, std::uint64_t tag, int count, std::vector<DatasetEntry>& into) {
    for (int c = 0; c < kNumShapeKinds; ++c) {
      for (int i = 0; i < count; ++i) {
        const auto seed = mix_seed(cfg.master_seed, c, i, tag);
        const auto kind = shape_from_index(c);
        const std::string rel = std::string(split) + "/" + std::string(shape_name(kind)) + "_" +
                                std::to_string(i) + ".xyz";
        write_cloud(cfg.out_dir / rel, generate_shape(kind, cfg.n, seed, cfg.jitter));
        into.push_back({rel, c, seed});
      }
    }
  };
  emit("train", kTrainSplitTag, cfg.train_per_class, m.train);
  emit("test", kTestSplitTag, cfg.test_per_class, m.test);
  write_manifest(cfg.out_dir / "manifest.json", m);
  return m;
}

std::vector<PointCloud> load_split(const DatasetManifest& manifest, const std::vector<DatasetEntry>& split) {
  std::vector<PointCloud> out;
  out.reserve(split.size());
  for (const auto& e : split) {
    auto cloud = read_cloud(manifest.root / e.path);
    if (cloud.label() != e.label) throw ParseError(e.path + ": label disagrees with manifest");
    out.push_back(std::move(cloud));
  }
  return out;
}

}  // namespace cosa
