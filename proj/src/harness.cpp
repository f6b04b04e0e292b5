#include "cosa/harness.hpp"

#include "cosa/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace cosa {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

void read_path(const json& j, const char* key, fs::path& out, const fs::path& base, const std::string& where) {
  std::string s;
  if (!j.contains(key)) {
    out = base / out;
    return;
  }
  read(j, key, s, where);
  if (s.empty()) throw ConfigError(where + "." + key + ": empty path");
  out = base / fs::path(s);
}

// Numbers, or the strings "inf"/"infinity" for an unbounded threshold.
double read_threshold(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string() && (j == "inf" || j == "infinity")) return std::numeric_limits<double>::infinity();
  throw ConfigError(where + ": expected a number or \"inf\"");
}

template <class F>
auto config_guard(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const PreconditionError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> RunConfig::attack_sources() const {
  if (!sources.empty()) return sources;
  std::vector<std::string> out;
  for (const auto& [name, path] : classifiers) out.push_back(name);
  return out;
}

RunConfig run_config_from_json(const json& j, const fs::path& base) {
  RunConfig c;
  check_keys(j, {"version", "seed", "output", "dataset", "models", "training", "attack", "defense", "ablation"},
             "config");
  int version = kRunConfigVersion;
  read(j, "version", version, "config");
  if (version != kRunConfigVersion) {
    throw ConfigError("config: unsupported version " + std::to_string(version));
  }
  read(j, "seed", c.seed, "config");
  read_path(j, "output", c.output, base, "config");

  const json empty = json::object();
  const json& ds = j.value("dataset", empty);
  check_keys(ds, {"dir", "train_per_class", "test_per_class", "num_points", "jitter"}, "dataset");
  read_path(ds, "dir", c.dataset_dir, base, "dataset");
  read(ds, "train_per_class", c.train_per_class, "dataset");
  read(ds, "test_per_class", c.test_per_class, "dataset");
  read(ds, "num_points", c.num_points, "dataset");
  read(ds, "jitter", c.jitter, "dataset");
  if (c.train_per_class < 1 || c.test_per_class < 1) throw ConfigError("dataset: per-class counts must be >= 1");
  if (c.num_points < 4) throw ConfigError("dataset: num_points must be >= 4");
  if (!(c.jitter >= 0.0)) throw ConfigError("dataset: jitter must be non-negative");

  const json& models = j.value("models", empty);
  check_keys(models, {"autoencoder", "classifiers", "dictionary"}, "models");
  read_path(models, "autoencoder", c.autoencoder, base, "models");
  read_path(models, "dictionary", c.dictionary, base, "models");
  if (models.contains("classifiers")) {
    const json& cl = models.at("classifiers");
    if (!cl.is_object() || cl.empty()) throw ConfigError("models.classifiers: expected a non-empty object");
    c.classifiers.clear();
    for (const auto& [name, path] : cl.items()) {
      if (!path.is_string()) throw ConfigError("models.classifiers." + name + ": expected a path");
      config_guard("models.classifiers", [&] { return nn::arch_from_name(name); });
      c.classifiers[name] = base / fs::path(path.get<std::string>());
    }
  } else {
    for (auto& [name, path] : c.classifiers) path = base / path;
  }

  const json& tr = j.value("training", empty);
  check_keys(tr, {"autoencoder", "classifier"}, "training");
  const json& tae = tr.value("autoencoder", empty);
  check_keys(tae, {"epochs", "lr", "hidden", "latent"}, "training.autoencoder");
  read(tae, "epochs", c.ae_hyper.epochs, "training.autoencoder");
  read(tae, "lr", c.ae_hyper.lr, "training.autoencoder");
  read(tae, "hidden", c.ae_hyper.hidden, "training.autoencoder");
  read(tae, "latent", c.ae_hyper.latent, "training.autoencoder");
  const json& tcl = tr.value("classifier", empty);
  check_keys(tcl, {"epochs", "lr", "hidden", "k"}, "training.classifier");
  read(tcl, "epochs", c.clf_hyper.epochs, "training.classifier");
  read(tcl, "lr", c.clf_hyper.lr, "training.classifier");
  read(tcl, "hidden", c.clf_hyper.hidden, "training.classifier");
  read(tcl, "k", c.clf_hyper.k, "training.classifier");
  if (c.ae_hyper.epochs < 1 || c.clf_hyper.epochs < 1) throw ConfigError("training: epochs must be >= 1");
  if (!(c.ae_hyper.lr > 0) || !(c.clf_hyper.lr > 0)) throw ConfigError("training: lr must be positive");
  if (c.ae_hyper.hidden < 1 || c.ae_hyper.latent < 1 || c.clf_hyper.hidden < 1 || c.clf_hyper.k < 1) {
    throw ConfigError("training: widths and k must be >= 1");
  }

  const json& at = j.value("attack", empty);
  check_keys(at, {"method", "eps", "sources", "max_inputs", "lambda_spa", "lambda_per", "lambda_rank", "lambda_ort",
                  "iters", "lr", "rank", "prototypes", "misloss", "margin_kappa", "pgd_steps", "pgd_step_size"},
             "attack");
  read(at, "method", c.method, "attack");
  if (c.method != "cosa" && c.method != "pgd") throw ConfigError("attack.method: expected cosa or pgd");
  read(at, "eps", c.eps_values, "attack");
  read(at, "sources", c.sources, "attack");
  read(at, "max_inputs", c.max_inputs, "attack");
  read(at, "lambda_spa", c.attack.lambda_spa, "attack");
  read(at, "lambda_per", c.attack.lambda_per, "attack");
  read(at, "lambda_rank", c.attack.lambda_rank, "attack");
  read(at, "lambda_ort", c.attack.lambda_ort, "attack");
  read(at, "iters", c.attack.iters, "attack");
  read(at, "lr", c.attack.lr, "attack");
  read(at, "rank", c.attack.rank, "attack");
  read(at, "prototypes", c.attack.prototypes, "attack");
  read(at, "margin_kappa", c.attack.margin_kappa, "attack");
  std::string misloss = misloss_name(c.attack.misloss);
  read(at, "misloss", misloss, "attack");
  c.attack.misloss = config_guard("attack.misloss", [&] { return misloss_from_name(misloss); });
  read(at, "pgd_steps", c.pgd_steps, "attack");
  read(at, "pgd_step_size", c.pgd_step_size, "attack");
  config_guard("attack", [&] {
    c.attack.validate(c.ae_hyper.latent);
    return 0;
  });
  if (c.eps_values.empty()) throw ConfigError("attack.eps: need at least one value");
  for (double e : c.eps_values) {
    if (!(e > 0.0)) throw ConfigError("attack.eps: values must be positive");
  }
  if (c.max_inputs < 0) throw ConfigError("attack.max_inputs: must be >= 0");
  if (c.pgd_steps < 0 || !(c.pgd_step_size > 0)) throw ConfigError("attack: invalid pgd_steps or pgd_step_size");
  for (const auto& s : c.sources) {
    if (!c.classifiers.count(s)) throw ConfigError("attack.sources: '" + s + "' is not a configured classifier");
  }

  const json& df = j.value("defense", empty);
  check_keys(df, {"kinds", "srs_keep_ratio", "sor_k", "sor_alpha", "seed"}, "defense");
  if (df.contains("kinds")) {
    std::vector<std::string> kinds;
    read(df, "kinds", kinds, "defense");
    c.defenses.clear();
    for (const auto& k : kinds) {
      const auto kind = config_guard("defense.kinds", [&] { return defense_from_name(k); });
      if (kind != DefenseKind::None) c.defenses.push_back(kind);
    }
  }
  read(df, "srs_keep_ratio", c.defense.srs_keep_ratio, "defense");
  read(df, "sor_k", c.defense.sor_k, "defense");
  if (df.contains("sor_alpha")) c.defense.sor_alpha = read_threshold(df.at("sor_alpha"), "defense.sor_alpha");
  read(df, "seed", c.defense.seed, "defense");
  config_guard("defense", [&] {
    c.defense.validate();
    return 0;
  });

  const json& ab = j.value("ablation", empty);
  check_keys(ab, {"modes", "seeds", "source", "eps"}, "ablation");
  if (ab.contains("modes")) {
    std::vector<std::string> modes;
    read(ab, "modes", modes, "ablation");
    c.ablation_modes.clear();
    for (const auto& m : modes) {
      c.ablation_modes.push_back(config_guard("ablation.modes", [&] { return ablation_from_name(m); }));
    }
  }
  read(ab, "seeds", c.ablation_seeds, "ablation");
  read(ab, "source", c.ablation_source, "ablation");
  read(ab, "eps", c.ablation_eps, "ablation");
  if (c.ablation_modes.empty() || c.ablation_seeds.empty()) throw ConfigError("ablation: modes and seeds must be non-empty");
  if (!c.classifiers.count(c.ablation_source)) {
    throw ConfigError("ablation.source: '" + c.ablation_source + "' is not a configured classifier");
  }
  if (!(c.ablation_eps > 0.0)) throw ConfigError("ablation.eps: must be positive");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  json cl = json::object();
  for (const auto& [name, path] : c.classifiers) cl[name] = path.string();
  std::vector<std::string> defenses, modes;
  for (auto d : c.defenses) defenses.push_back(defense_name(d));
  for (auto m : c.ablation_modes) modes.push_back(ablation_name(m));
  json alpha = std::isinf(c.defense.sor_alpha) ? json("inf") : json(c.defense.sor_alpha);
  return {
      {"version", kRunConfigVersion},
      {"seed", c.seed},
      {"output", c.output.string()},
      {"dataset",
       {{"dir", c.dataset_dir.string()},
        {"train_per_class", c.train_per_class},
        {"test_per_class", c.test_per_class},
        {"num_points", c.num_points},
        {"jitter", c.jitter}}},
      {"models", {{"autoencoder", c.autoencoder.string()}, {"classifiers", cl}, {"dictionary", c.dictionary.string()}}},
      {"training",
       {{"autoencoder",
         {{"epochs", c.ae_hyper.epochs}, {"lr", c.ae_hyper.lr}, {"hidden", c.ae_hyper.hidden}, {"latent", c.ae_hyper.latent}}},
        {"classifier",
         {{"epochs", c.clf_hyper.epochs}, {"lr", c.clf_hyper.lr}, {"hidden", c.clf_hyper.hidden}, {"k", c.clf_hyper.k}}}}},
      {"attack",
       {{"method", c.method},
        {"eps", c.eps_values},
        {"sources", c.sources},
        {"max_inputs", c.max_inputs},
        {"lambda_spa", c.attack.lambda_spa},
        {"lambda_per", c.attack.lambda_per},
        {"lambda_rank", c.attack.lambda_rank},
        {"lambda_ort", c.attack.lambda_ort},
        {"iters", c.attack.iters},
        {"lr", c.attack.lr},
        {"rank", c.attack.rank},
        {"prototypes", c.attack.prototypes},
        {"misloss", misloss_name(c.attack.misloss)},
        {"margin_kappa", c.attack.margin_kappa},
        {"pgd_steps", c.pgd_steps},
        {"pgd_step_size", c.pgd_step_size}}},
      {"defense",
       {{"kinds", defenses},
        {"srs_keep_ratio", c.defense.srs_keep_ratio},
        {"sor_k", c.defense.sor_k},
        {"sor_alpha", alpha},
        {"seed", c.defense.seed}}},
      {"ablation", {{"modes", modes}, {"seeds", c.ablation_seeds}, {"source", c.ablation_source}, {"eps", c.ablation_eps}}},
  };
}

// ---------------------------------------------------------------------------
// Evaluation

AsrResult evaluate_asr(const std::vector<AdvSample>& samples, const nn::Classifier& model) {
  require(!samples.empty(), "evaluate_asr: empty adversarial set");
  AsrResult r;
  for (const auto& s : samples) {
    if (nn::predict(model, s.clean) != s.label) continue;
    ++r.eligible;
    if (nn::predict(model, s.adversarial) != s.label) ++r.fooled;
  }
  if (r.eligible == 0) throw PreconditionError("evaluate_asr: no input is classified correctly in clean form");
  r.asr = 100.0 * r.fooled / r.eligible;
  return r;
}

json to_json(const TransferCell& c) {
  return {{"source", c.source}, {"target", c.target},     {"attack", c.attack},         {"eps", c.eps},
          {"defense", c.defense}, {"seed", c.seed},       {"asr", c.asr},               {"samples", c.samples},
          {"white_box", c.white_box}, {"error", c.error}};
}

TransferCell transfer_cell_from_json(const json& j) {
  try {
    TransferCell c;
    c.source = j.at("source").get<std::string>();
    c.target = j.at("target").get<std::string>();
    c.attack = j.at("attack").get<std::string>();
    c.eps = j.at("eps").get<double>();
    c.defense = j.at("defense").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.asr = j.at("asr").get<double>();
    c.samples = j.at("samples").get<int>();
    c.white_box = j.at("white_box").get<bool>();
    c.error = j.at("error").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("result cell: ") + e.what());
  }
}

json to_json(const AttackRecord& r) {
  return {{"input", r.input},
          {"label", r.label},
          {"source", r.source},
          {"attack", r.attack},
          {"eps", r.eps},
          {"seed", r.seed},
          {"success", r.success},
          {"predicted", r.predicted},
          {"distortion", {{"cd", r.distortion.cd}, {"hd", r.distortion.hd}, {"l2", r.distortion.l2}, {"linf", r.distortion.linf}}},
          {"pre_clip_linf", r.pre_clip_linf},
          {"sparse_residual", r.sparse_residual},
          {"error", r.error}};
}

Experiment load_experiment(const RunConfig& cfg, bool need_models) {
  Experiment ex;
  ex.cfg = cfg;
  const fs::path manifest = cfg.manifest_path();
  if (!fs::exists(manifest)) throw ConfigError("dataset manifest not found: " + manifest.string() + " (run gen-data)");
  ex.manifest = read_manifest(manifest);
  ex.train = load_split(ex.manifest, ex.manifest.train);
  ex.test = load_split(ex.manifest, ex.manifest.test);
  for (const auto& e : ex.manifest.test) ex.test_names.push_back(e.path);
  if (!need_models) return ex;
  auto need = [](const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  };
  need(cfg.autoencoder, "autoencoder checkpoint");
  ex.ae = load_autoencoder(cfg.autoencoder);
  for (const auto& [name, path] : cfg.classifiers) {
    need(path, "classifier checkpoint");
    ex.classifiers[name] = load_classifier(path);
  }
  need(cfg.dictionary, "dictionary file");
  ex.dictionaries = load_dictionaries(cfg.dictionary);
  return ex;
}

std::size_t attack_input_count(const Experiment& ex) {
  const auto n = ex.test.size();
  return ex.cfg.max_inputs > 0 ? std::min<std::size_t>(n, static_cast<std::size_t>(ex.cfg.max_inputs)) : n;
}

std::uint64_t input_seed(std::uint64_t master, std::size_t input_index) {
  return mix_seed(master, 0, static_cast<std::uint64_t>(input_index), 0x6174);
}

std::vector<AttackRecord> run_attacks(const Experiment& ex, const std::string& source, const std::string& attack,
                                      double eps, std::uint64_t master_seed) {
  const auto it = ex.classifiers.find(source);
  if (it == ex.classifiers.end()) throw ConfigError("unknown source classifier '" + source + "'");
  const bool pgd = attack == "pgd";
  const AblationMode mode = attack == "cosa" ? AblationMode::Full : pgd ? AblationMode::Full : ablation_from_name(attack);
  std::vector<AttackRecord> out;
  const auto count = attack_input_count(ex);
  for (std::size_t i = 0; i < count; ++i) {
    AttackRecord r;
    r.input = ex.test_names[i];
    r.label = *ex.test[i].label();
    r.source = source;
    r.attack = attack;
    r.eps = eps;
    r.seed = input_seed(master_seed, i);
    r.clean = ex.test[i].points();
    try {
      AttackResult res;
      if (pgd) {
        res = pgd_baseline(r.clean, r.label, it->second, eps, ex.cfg.pgd_steps, ex.cfg.pgd_step_size);
      } else {
        AttackConfig cfg = ex.cfg.attack;
        cfg.eps = eps;
        cfg.seed = r.seed;
        res = ablation_attack(mode, r.clean, r.label, it->second, ex.ae, ex.dictionaries, cfg);
      }
      r.success = res.success;
      r.predicted = res.predicted;
      r.distortion = res.distortion;
      r.pre_clip_linf = res.pre_clip_linf;
      r.sparse_residual = res.sparse_residual;
      r.adversarial = std::move(res.adversarial);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::uint64_t defense_seed(std::uint64_t base, std::size_t index) {
  return mix_seed(base, 0, static_cast<std::uint64_t>(index), 0x6466);
}

}  // namespace

std::vector<TransferCell> evaluate_records(const Experiment& ex, const std::vector<AttackRecord>& records,
                                           const std::string& source, const std::string& attack, double eps,
                                           DefenseKind defense) {
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < ex.test_names.size(); ++i) by_name[ex.test_names[i]] = i;
  std::vector<AdvSample> samples;
  std::string error;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    Points clean = r.clean;
    if (clean.rows() == 0) {
      const auto it = by_name.find(r.input);
      if (it == by_name.end()) throw PreconditionError("result refers to unknown test input " + r.input);
      clean = ex.test[it->second].points();
    }
    if (!r.error.empty()) {
      if (error.empty()) error = r.input + ": " + r.error;
      continue;
    }
    DefenseConfig dc = ex.cfg.defense;
    dc.seed = defense_seed(ex.cfg.defense.seed, i);
    try {
      samples.push_back({clean, apply_defense(defense, PointCloud(r.adversarial), dc).points(), r.label});
    } catch (const std::exception& e) {
      if (error.empty()) error = r.input + ": " + e.what();
    }
  }
  std::vector<TransferCell> cells;
  for (const auto& [name, model] : ex.classifiers) {
    TransferCell c;
    c.source = source;
    c.target = name;
    c.attack = attack;
    c.eps = eps;
    c.defense = defense_name(defense);
    c.white_box = name == source;
    c.error = error;
    if (samples.empty()) {
      if (c.error.empty()) c.error = "no adversarial samples";
    } else {
      try {
        const auto r = evaluate_asr(samples, model);
        c.asr = r.asr;
        c.samples = r.eligible;
      } catch (const std::exception& e) {
        c.error = e.what();
      }
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

std::vector<TransferCell> transfer_matrix(const Experiment& ex) {
  std::vector<TransferCell> cells;
  for (double eps : ex.cfg.eps_values) {
    for (const auto& src : ex.cfg.attack_sources()) {
      const auto recs = run_attacks(ex, src, ex.cfg.method, eps, ex.cfg.seed);
      auto part = evaluate_records(ex, recs, src, ex.cfg.method, eps, DefenseKind::None);
      for (auto& c : part) c.seed = ex.cfg.seed;
      cells.insert(cells.end(), part.begin(), part.end());
    }
  }
  return cells;
}

std::vector<TransferCell> defended_matrix(const Experiment& ex, DefenseKind defense) {
  std::vector<TransferCell> cells;
  for (double eps : ex.cfg.eps_values) {
    for (const auto& src : ex.cfg.attack_sources()) {
      const auto recs = run_attacks(ex, src, ex.cfg.method, eps, ex.cfg.seed);
      auto part = evaluate_records(ex, recs, src, ex.cfg.method, eps, defense);
      for (auto& c : part) c.seed = ex.cfg.seed;
      cells.insert(cells.end(), part.begin(), part.end());
    }
  }
  return cells;
}

std::vector<ImperceptibilityRow> imperceptibility_report(const std::vector<AttackRecord>& records) {
  std::vector<ImperceptibilityRow> rows;
  for (const auto& r : records) {
    if (!r.error.empty()) continue;
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& x) { return x.attack == r.attack; });
    if (it == rows.end()) {
      rows.push_back({r.attack});
      it = rows.end() - 1;
    }
    it->cd += r.distortion.cd;
    it->hd += r.distortion.hd;
    it->l2 += r.distortion.l2;
    ++it->samples;
  }
  for (auto& row : rows) {
    row.cd /= row.samples;
    row.hd /= row.samples;
    row.l2 /= row.samples;
  }
  return rows;
}

std::vector<fs::path> export_prototypes(const DictionarySet& dicts, const nn::Decoder& decoder, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> out;
  for (const auto& [label, dict] : dicts) {
    require(dict.dim() == decoder.latent_dim(), "export_prototypes: dictionary width does not match decoder");
    const std::string name = label >= 0 && label < kNumShapeKinds ? std::string(shape_name(shape_from_index(label)))
                                                                  : std::to_string(label);
    for (Eigen::Index j = 0; j < dict.size(); ++j) {
      const fs::path p = out_dir / (name + "_" + std::to_string(j) + ".xyz");
      write_cloud(p, PointCloud(nn::decoder_forward(decoder, Eigen::VectorXd(dict.atoms.col(j))), label));
      out.push_back(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Result files

std::string eps_tag(double eps) { return format_double(eps); }

fs::path attack_dir(const fs::path& out, const std::string& attack, const std::string& source, double eps) {
  return out / "attacks" / attack / source / ("eps" + eps_tag(eps));
}

namespace {

std::string stem_of(const std::string& input) { return fs::path(input).stem().string(); }

}  // namespace

void write_records(const fs::path& dir, const std::vector<AttackRecord>& records) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json index = json::array();
  for (const auto& r : records) {
    const std::string stem = stem_of(r.input);
    json j = to_json(r);
    if (r.error.empty()) {
      write_cloud(dir / (stem + ".xyz"), PointCloud(r.adversarial, r.label));
      j["adversarial"] = stem + ".xyz";
    }
    write_json(dir / (stem + ".json"), j);
    index.push_back(stem);
  }
  write_json(dir / "index.json", index);
}

std::vector<AttackRecord> read_records(const fs::path& dir) {
  const json index = read_json(dir / "index.json");
  std::vector<AttackRecord> out;
  try {
    for (const auto& stem : index) {
      const json j = read_json(dir / (stem.get<std::string>() + ".json"));
      AttackRecord r;
      r.input = j.at("input").get<std::string>();
      r.label = j.at("label").get<int>();
      r.source = j.at("source").get<std::string>();
      r.attack = j.at("attack").get<std::string>();
      r.eps = j.at("eps").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.success = j.at("success").get<bool>();
      r.predicted = j.at("predicted").get<int>();
      const auto& d = j.at("distortion");
      r.distortion = {d.at("cd").get<double>(), d.at("hd").get<double>(), d.at("l2").get<double>(),
                      d.at("linf").get<double>()};
      r.pre_clip_linf = j.at("pre_clip_linf").get<double>();
      r.sparse_residual = j.value("sparse_residual", 0.0);
      r.error = j.at("error").get<std::string>();
      if (r.error.empty()) r.adversarial = read_cloud(dir / j.at("adversarial").get<std::string>()).points();
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ParseError(dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace cosa
