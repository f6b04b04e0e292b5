#pragma once

#include "cosa/attack.hpp"
#include "cosa/defense.hpp"
#include "cosa/subspace.hpp"
#include "cosa/synthdata.hpp"
#include "cosa/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cosa {

// Bad or missing configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kRunConfigVersion = 1;

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output = "out";

  // Dataset generation; the manifest lives at <dataset_dir>/manifest.json.
  std::filesystem::path dataset_dir = "data";
  int train_per_class = 50;
  int test_per_class = 10;
  int num_points = 256;
  double jitter = 0.005;

  std::filesystem::path autoencoder = "models/ae.json";
  std::map<std::string, std::filesystem::path> classifiers = {
      {"A", "models/clf_A.json"}, {"B", "models/clf_B.json"}, {"C", "models/clf_C.json"}};
  std::filesystem::path dictionary = "models/dict.json";

  nn::AutoEncoderHyper ae_hyper;
  nn::ClassifierHyper clf_hyper;

  std::string method = "cosa";  // cosa | pgd
  AttackConfig attack;
  std::vector<double> eps_values = {0.18, 0.45};
  std::vector<std::string> sources;  // empty: every configured classifier
  int max_inputs = 0;                // 0: the whole test split
  int pgd_steps = 50;
  double pgd_step_size = 0.01;

  DefenseConfig defense;
  std::vector<DefenseKind> defenses = {DefenseKind::Srs, DefenseKind::Sor};

  std::vector<AblationMode> ablation_modes = {AblationMode::None, AblationMode::SOnly, AblationMode::BOnly,
                                              AblationMode::Full};
  std::vector<std::uint64_t> ablation_seeds = {1, 2, 3};
  std::string ablation_source = "A";
  double ablation_eps = 0.18;

  std::filesystem::path manifest_path() const { return dataset_dir / "manifest.json"; }
  std::vector<std::string> attack_sources() const;
};

// Relative paths are resolved against base_dir. Unknown fields and bad values throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

// ---------------------------------------------------------------------------

struct AdvSample {
  Points clean;
  Points adversarial;
  int label = 0;
};

struct AsrResult {
  double asr = 0.0;  // percent over the eligible set
  int eligible = 0;
  int fooled = 0;
};

// Eligible inputs are those the model classifies correctly in clean form. Throws
// PreconditionError when none are eligible.
AsrResult evaluate_asr(const std::vector<AdvSample>& samples, const nn::Classifier& model);

struct TransferCell {
  std::string source;
  std::string target;
  std::string attack;
  double eps = 0.0;
  std::string defense = "none";
  std::uint64_t seed = 0;  // master seed of the attack run
  double asr = 0.0;
  int samples = 0;
  bool white_box = false;
  std::string error;  // non-empty marks a failed cell
};

nlohmann::json to_json(const TransferCell& c);
TransferCell transfer_cell_from_json(const nlohmann::json& j);

// One attacked input as stored on disk.
struct AttackRecord {
  std::string input;  // test cloud file name
  int label = 0;
  std::string source;
  std::string attack;
  double eps = 0.0;
  std::uint64_t seed = 0;
  bool success = false;
  int predicted = -1;
  DistortionReport distortion;
  double pre_clip_linf = 0.0;
  double sparse_residual = 0.0;
  std::string error;
  Points clean;
  Points adversarial;
};

nlohmann::json to_json(const AttackRecord& r);

// Everything an experiment needs in memory.
struct Experiment {
  RunConfig cfg;
  DatasetManifest manifest;
  std::vector<PointCloud> train;
  std::vector<PointCloud> test;
  std::vector<std::string> test_names;
  nn::AutoEncoder ae;
  std::map<std::string, nn::Classifier> classifiers;
  DictionarySet dictionaries;
};

// Loads manifest, checkpoints and dictionaries named by cfg. Missing files throw ConfigError.
Experiment load_experiment(const RunConfig& cfg, bool need_models = true);

// Test inputs used by attacks: the first max_inputs of the test split (all when 0).
std::size_t attack_input_count(const Experiment& ex);

// Per-input attack seed.
std::uint64_t input_seed(std::uint64_t master, std::size_t input_index);

// attack is "cosa", "pgd", or an ablation mode name.
std::vector<AttackRecord> run_attacks(const Experiment& ex, const std::string& source, const std::string& attack,
                                      double eps, std::uint64_t master_seed);

// Evaluates every classifier on a set of records, optionally after a defense.
std::vector<TransferCell> evaluate_records(const Experiment& ex, const std::vector<AttackRecord>& records,
                                           const std::string& source, const std::string& attack, double eps,
                                           DefenseKind defense);

std::vector<TransferCell> transfer_matrix(const Experiment& ex);
std::vector<TransferCell> defended_matrix(const Experiment& ex, DefenseKind defense);

struct ImperceptibilityRow {
  std::string attack;
  double cd = 0.0;
  double hd = 0.0;
  double l2 = 0.0;
  int samples = 0;
};

// Means of CD, HD and l2 per attack tag, in order of first appearance.
std::vector<ImperceptibilityRow> imperceptibility_report(const std::vector<AttackRecord>& records);

// Writes <class>_<j>.xyz for every prototype column; returns the written paths.
std::vector<std::filesystem::path> export_prototypes(const DictionarySet& dicts, const nn::Decoder& decoder,
                                                     const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Result files

std::filesystem::path attack_dir(const std::filesystem::path& out, const std::string& attack,
                                 const std::string& source, double eps);
void write_records(const std::filesystem::path& dir, const std::vector<AttackRecord>& records);
std::vector<AttackRecord> read_records(const std::filesystem::path& dir);

std::string eps_tag(double eps);

// Writes the CSV/markdown/SVG report set from the result files under `out`.
std::vector<std::filesystem::path> write_reports(const std::filesystem::path& out);

// ---------------------------------------------------------------------------

// Runs the command line; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace cosa
