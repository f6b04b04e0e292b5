#pragma once

#include "cosa/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cosa {

// Class index is the enumerator value.
enum class ShapeKind : int { sphere = 0, cube, cylinder, cone, torus, pyramid, disk, capsule };

inline constexpr int kNumShapeKinds = 8;

std::string_view shape_name(ShapeKind kind);
ShapeKind shape_from_name(std::string_view name);
ShapeKind shape_from_index(int index);

// Canonical shape parameter (aspect ratio, tube radius, ...).
// Shapes without a free parameter (sphere, cube) ignore it.
struct ShapeInstance {
  ShapeKind kind = ShapeKind::sphere;
  double param = 0.0;
};

// Raw surface sample before jitter and normalization.
struct SurfaceSample {
  ShapeInstance shape;
  Points points;
};

SurfaceSample sample_surface(ShapeKind kind, int n, std::uint64_t seed);

// Distance-like residual of a raw point from the ideal surface of `shape` (0 on the surface).
double surface_residual(const ShapeInstance& shape, const Eigen::RowVector3d& point);

// n points uniform on the surface, Gaussian jitter of std-dev `jitter`, then normalized.
PointCloud generate_shape(ShapeKind kind, int n, std::uint64_t seed, double jitter);

// 64-bit seed splitting: child seed for (class, sample, split) under a master seed.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t class_index, std::uint64_t sample_index,
                       std::uint64_t split_tag);

inline constexpr std::uint64_t kTrainSplitTag = 0x7472;  // "tr"
inline constexpr std::uint64_t kTestSplitTag = 0x7465;   // "te"

struct DatasetEntry {
  std::string path;  // relative to the manifest directory
  int label = 0;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  int version = 1;
  int num_classes = kNumShapeKinds;
  int n = 256;
  double jitter = 0.0;
  std::uint64_t master_seed = 0;
  std::vector<DatasetEntry> train;
  std::vector<DatasetEntry> test;
  std::filesystem::path root;  // directory holding the manifest; not serialized
};

struct DatasetConfig {
  std::filesystem::path out_dir;
  int train_per_class = 50;
  int test_per_class = 10;
  int n = 256;
  double jitter = 0.005;
  std::uint64_t master_seed = 1;
};

// Writes every cloud plus `manifest.json` under cfg.out_dir.
DatasetManifest make_dataset(const DatasetConfig& cfg);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Loads the clouds listed in a split, labels attached.
std::vector<PointCloud> load_split(const DatasetManifest& manifest, const std::vector<DatasetEntry>& split);

// cosa-xyz text format. Doubles are written in shortest round-trip form.
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_cloud(const std::filesystem::path& path);
std::string format_cloud(const PointCloud& cloud);
PointCloud parse_cloud(std::string_view text);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace cosa
