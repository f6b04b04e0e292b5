#include "cosa/checkpoint.hpp"
#include "cosa/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace cosa {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
  RunConfig cfg;
  std::string command;
};

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) ensure_dir(p.parent_path());
}

void write_summary(const Context& ctx, json body) {
  ensure_dir(ctx.cfg.output / "summary");
  body["command"] = ctx.command;
  body["seed"] = ctx.cfg.seed;
  write_json(ctx.cfg.output / "summary" / (ctx.command + ".json"), body);
}

json report_json(const nn::TrainReport& r) {
  json trace = json::array();
  for (const auto& [epoch, value] : r.metric_trace) trace.push_back({epoch, value});
  return {{"final_loss", r.final_loss}, {"metric", r.metric}, {"epochs", r.epochs},
          {"seed", r.seed}, {"loss_trace", r.loss_trace}, {"metric_trace", trace}};
}

void cmd_gen_data(const Context& ctx) {
  const auto& c = ctx.cfg;
  DatasetConfig dc;
  dc.out_dir = c.dataset_dir;
  dc.train_per_class = c.train_per_class;
  dc.test_per_class = c.test_per_class;
  dc.n = c.num_points;
  dc.jitter = c.jitter;
  dc.master_seed = c.seed;
  const auto m = make_dataset(dc);
  std::cerr << "wrote " << m.train.size() << " train and " << m.test.size() << " test clouds to " << c.dataset_dir.string()
            << "\n";
  write_summary(ctx, {{"manifest", c.manifest_path().string()}, {"train", m.train.size()}, {"test", m.test.size()}});
}

void cmd_train_ae(const Context& ctx) {
  const auto ex = load_experiment(ctx.cfg, false);
  auto hyper = ctx.cfg.ae_hyper;
  auto [ae, rep] = nn::train_autoencoder(ex.train, ex.test, hyper, ctx.cfg.seed);
  ensure_parent(ctx.cfg.autoencoder);
  save_autoencoder(ctx.cfg.autoencoder, ae);
  std::cerr << "autoencoder: held-out chamfer " << rep.metric << " after " << rep.epochs << " epochs\n";
  write_summary(ctx, {{"checkpoint", ctx.cfg.autoencoder.string()}, {"report", report_json(rep)}});
}

void cmd_train_clf(const Context& ctx) {
  const auto ex = load_experiment(ctx.cfg, false);
  json reports = json::object();
  for (const auto& [name, path] : ctx.cfg.classifiers) {
    auto [clf, rep] = nn::train_classifier(nn::arch_from_name(name), ex.manifest.num_classes, ex.train, ex.test,
                                           ctx.cfg.clf_hyper, ctx.cfg.seed);
    ensure_parent(path);
    save_classifier(path, clf);
    std::cerr << "classifier " << name << ": test accuracy " << rep.metric << "\n";
    reports[name] = {{"checkpoint", path.string()}, {"report", report_json(rep)}};
  }
  write_summary(ctx, {{"classifiers", reports}});
}

void cmd_build_dict(const Context& ctx) {
  auto cfg = ctx.cfg;
  const auto ex = load_experiment(cfg, false);
  if (!fs::exists(cfg.autoencoder)) throw ConfigError("autoencoder checkpoint not found: " + cfg.autoencoder.string());
  const auto ae = load_autoencoder(cfg.autoencoder);
  const auto dicts = build_dictionaries(ae.encoder, ex.train, cfg.attack.prototypes, cfg.seed);
  ensure_parent(cfg.dictionary);
  save_dictionaries(cfg.dictionary, dicts);
  json cond = json::object();
  for (const auto& [label, d] : dicts) cond[std::to_string(label)] = dictionary_condition(d);
  write_summary(ctx, {{"dictionary", cfg.dictionary.string()}, {"prototypes", cfg.attack.prototypes},
                      {"condition", cond}});
}

void cmd_attack(const Context& ctx) {
  const auto ex = load_experiment(ctx.cfg);
  json runs = json::array();
  for (double eps : ctx.cfg.eps_values) {
    for (const auto& src : ctx.cfg.attack_sources()) {
      const auto recs = run_attacks(ex, src, ctx.cfg.method, eps, ctx.cfg.seed);
      const auto dir = attack_dir(ctx.cfg.output, ctx.cfg.method, src, eps);
      write_records(dir, recs);
      int ok = 0, success = 0, failed = 0;
      for (const auto& r : recs) {
        if (!r.error.empty()) {
          ++failed;
          continue;
        }
        ++ok;
        if (r.success) ++success;
      }
      std::cerr << ctx.cfg.method << " on " << src << " eps " << eps_tag(eps) << ": " << success << "/" << ok
                << " fool the surrogate\n";
      runs.push_back({{"source", src}, {"eps", eps}, {"attack", ctx.cfg.method}, {"inputs", recs.size()},
                      {"surrogate_fooled", success}, {"failed", failed}, {"dir", dir.string()}});
    }
  }
  write_summary(ctx, {{"runs", runs}});
}

std::vector<fs::path> attack_record_dirs(const fs::path& out) {
  std::vector<fs::path> dirs;
  const fs::path root = out / "attacks";
  if (!fs::exists(root)) return dirs;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "index.json") dirs.push_back(e.path().parent_path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

void cmd_defend(const Context& ctx) {
  const auto ex = load_experiment(ctx.cfg, false);
  const auto dirs = attack_record_dirs(ctx.cfg.output);
  if (dirs.empty()) throw ConfigError("no attack results under " + (ctx.cfg.output / "attacks").string() + " (run attack)");
  json counts = json::object();
  for (auto kind : ctx.cfg.defenses) {
    const auto name = defense_name(kind);
    const fs::path root = ctx.cfg.output / "defended" / name;
    long kept = 0, total = 0;
    auto defend_one = [&](const PointCloud& cloud, std::size_t index, const fs::path& path) {
      DefenseConfig dc = ctx.cfg.defense;
      dc.seed = mix_seed(ctx.cfg.defense.seed, 0, static_cast<std::uint64_t>(index), 0x6466);
      const auto out = apply_defense(kind, cloud, dc);
      kept += out.size();
      total += cloud.size();
      ensure_parent(path);
      write_cloud(path, out);
    };
    for (std::size_t i = 0; i < ex.test.size(); ++i) {
      defend_one(ex.test[i], i, root / "clean" / fs::path(ex.test_names[i]).filename());
    }
    for (const auto& dir : dirs) {
      const auto recs = read_records(dir);
      const auto rel = fs::relative(dir, ctx.cfg.output / "attacks");
      for (std::size_t i = 0; i < recs.size(); ++i) {
        if (!recs[i].error.empty()) continue;
        defend_one(PointCloud(recs[i].adversarial, recs[i].label), i,
                   root / rel / (fs::path(recs[i].input).stem().string() + ".xyz"));
      }
    }
    counts[name] = {{"points_in", total}, {"points_kept", kept}};
  }
  write_summary(ctx, {{"defenses", counts}});
}

json clean_accuracy(const Experiment& ex) {
  json acc = json::object();
  std::vector<DefenseKind> kinds{DefenseKind::None};
  kinds.insert(kinds.end(), ex.cfg.defenses.begin(), ex.cfg.defenses.end());
  for (auto kind : kinds) {
    json row = json::object();
    for (const auto& [name, model] : ex.classifiers) {
      int correct = 0;
      for (std::size_t i = 0; i < ex.test.size(); ++i) {
        DefenseConfig dc = ex.cfg.defense;
        dc.seed = mix_seed(ex.cfg.defense.seed, 0, static_cast<std::uint64_t>(i), 0x6466);
        if (nn::predict(model, apply_defense(kind, ex.test[i], dc).points()) == *ex.test[i].label()) ++correct;
      }
      row[name] = 100.0 * correct / static_cast<double>(ex.test.size());
    }
    acc[defense_name(kind)] = row;
  }
  return acc;
}

void cmd_eval(const Context& ctx) {
  const auto ex = load_experiment(ctx.cfg);
  const auto dirs = attack_record_dirs(ctx.cfg.output);
  if (dirs.empty()) throw ConfigError("no attack results under " + (ctx.cfg.output / "attacks").string() + " (run attack)");
  json cells = json::array();
  std::vector<DefenseKind> kinds{DefenseKind::None};
  kinds.insert(kinds.end(), ctx.cfg.defenses.begin(), ctx.cfg.defenses.end());
  for (const auto& dir : dirs) {
    const auto recs = read_records(dir);
    if (recs.empty()) continue;
    const auto& first = recs.front();
    for (auto kind : kinds) {
      for (auto& c : evaluate_records(ex, recs, first.source, first.attack, first.eps, kind)) {
        c.seed = ctx.cfg.seed;
        cells.push_back(to_json(c));
      }
    }
  }
  json body = {{"asr_rule", "eligible set: inputs the evaluated model classifies correctly in clean form"},
               {"clean_accuracy", clean_accuracy(ex)},
               {"cells", cells}};
  ensure_dir(ctx.cfg.output);
  write_json(ctx.cfg.output / "eval.json", body);
  write_summary(ctx, {{"cells", cells.size()}, {"eval", (ctx.cfg.output / "eval.json").string()}});
}

void cmd_ablate(const Context& ctx) {
  const auto ex = load_experiment(ctx.cfg);
  const auto& c = ctx.cfg;
  json cells = json::array();
  std::vector<DefenseKind> kinds{DefenseKind::None};
  kinds.insert(kinds.end(), c.defenses.begin(), c.defenses.end());
  for (auto seed : c.ablation_seeds) {
    for (auto mode : c.ablation_modes) {
      const auto name = ablation_name(mode);
      const auto recs = run_attacks(ex, c.ablation_source, name, c.ablation_eps, seed);
      write_records(c.output / "ablation" / ("seed" + std::to_string(seed)) / name, recs);
      for (auto kind : kinds) {
        for (auto& cell : evaluate_records(ex, recs, c.ablation_source, name, c.ablation_eps, kind)) {
          cell.seed = seed;
          cells.push_back(to_json(cell));
        }
      }
      std::cerr << "ablation " << name << " seed " << seed << " done\n";
    }
  }
  write_json(c.output / "ablation" / "ablation.json",
             {{"asr_rule", "eligible set: inputs the evaluated model classifies correctly in clean form"},
              {"cells", cells}});
  write_summary(ctx, {{"cells", cells.size()}});
}

void cmd_export_protos(const Context& ctx) {
  const auto& c = ctx.cfg;
  if (!fs::exists(c.autoencoder)) throw ConfigError("autoencoder checkpoint not found: " + c.autoencoder.string());
  if (!fs::exists(c.dictionary)) throw ConfigError("dictionary file not found: " + c.dictionary.string());
  const auto ae = load_autoencoder(c.autoencoder);
  const auto files = export_prototypes(load_dictionaries(c.dictionary), ae.decoder, c.output / "prototypes");
  json names = json::array();
  for (const auto& f : files) names.push_back(f.filename().string());
  write_summary(ctx, {{"files", names}});
}

void cmd_report(const Context& ctx) {
  if (!fs::exists(ctx.cfg.output)) throw ConfigError("output directory not found: " + ctx.cfg.output.string());
  const auto files = write_reports(ctx.cfg.output);
  json names = json::array();
  for (const auto& f : files) names.push_back(f.filename().string());
  write_summary(ctx, {{"files", names}});
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"cosa: prototype-guided latent subspace attacks on point-cloud classifiers"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const Context&);
  };
  const Command commands[] = {
      {"gen-data", "generate the synthetic shape dataset", cmd_gen_data},
      {"train-ae", "train the point-cloud autoencoder", cmd_train_ae},
      {"train-clf", "train every configured classifier", cmd_train_clf},
      {"build-dict", "build class-wise prototype dictionaries", cmd_build_dict},
      {"attack", "attack the test split with every source classifier", cmd_attack},
      {"defend", "apply the configured defenses to clean and adversarial clouds", cmd_defend},
      {"eval", "evaluate transfer and defended attack success rates", cmd_eval},
      {"ablate", "run the subspace ablation over master seeds", cmd_ablate},
      {"export-protos", "decode every prototype to a point cloud file", cmd_export_protos},
      {"report", "write CSV, markdown and SVG reports from result files", cmd_report},
  };
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_option("--out", out, "override the output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  Context ctx;
  try {
    ctx.command = app.get_subcommands().front()->get_name();
    ctx.cfg = load_run_config(config_path);
    if (seed) ctx.cfg.seed = *seed;
    if (!out.empty()) ctx.cfg.output = out;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
  try {
    for (const auto& cmd : commands) {
      if (ctx.command == cmd.name) cmd.run(ctx);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << ctx.command << " failed: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace cosa
