// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Supplementary lines (margin loss) are informational.
#include "cosa/attack.hpp"
#include "cosa/checkpoint.hpp"
#include "cosa/harness.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>

using namespace cosa;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr int kGradInstances = 20;
constexpr double kGradSeconds = 60.0;
constexpr double kKktTol = 1e-8;
constexpr int kKktInstances = 100;
constexpr double kClosedFormTol = 1e-10;
constexpr double kGridGap = 1e-5;
constexpr double kSparseSeconds = 60.0;
constexpr double kOracleTol = 1e-12;
constexpr int kOraclePairs = 200;
constexpr double kClipSlack = 1e-12;
constexpr double kSingularFloor = 1e-9;
constexpr double kOrthoBound = 0.5;
constexpr double kNuclearTol = 1e-9;
constexpr double kAeCd = 0.01;
constexpr double kClfAccuracy = 0.90;
constexpr double kTrainSeconds = 300.0;
constexpr double kWhiteBoxAsr = 90.0;
constexpr double kWhiteBoxSeconds = 1200.0;
constexpr double kEps = 0.18;
constexpr double kOrderingGap = 5.0;
constexpr double kSorRetention = 0.60;
constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr const char* kSource = "A";
constexpr const char* kTargets[] = {"B", "C"};

using clk = std::chrono::steady_clock;
double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Verdicts {
  std::vector<std::pair<int, bool>> results;
  void report(int id, bool pass, const std::string& detail) {
    results.emplace_back(id, pass);
    std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
  }
  bool all() const {
    for (const auto& r : results)
      if (!r.second) return false;
    return true;
  }
};

void note(const std::string& s) { std::cout << "  " << s << std::endl; }

MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd m(r, c);
  for (auto& v : m.reshaped()) v = g(rng);
  return m;
}

Points random_cloud(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Points p(n, 3);
  for (auto& v : p.reshaped()) v = u(rng);
  return p;
}

// ---------------------------------------------------------------------------

void criterion1(Verdicts& v, const Experiment& ex) {
  const auto t0 = clk::now();
  std::mt19937_64 rng(101);
  const nn::Classifier& clf = ex.classifiers.at(kSource);
  AttackConfig cfg;
  double worst = 0.0;
  int checked = 0, skipped_instances = 0;
  long skipped_coords = 0;
  for (int t = 0; checked < kGradInstances && t < 5 * kGradInstances; ++t) {
    const PointCloud& input = ex.test[static_cast<std::size_t>(t) % ex.test.size()];
    const int label = *input.label();
    const MatrixXd& d = ex.dictionaries.at(label).atoms;
    const VectorXd alpha = gaussian(d.cols(), 1, rng, 0.5);
    const MatrixXd u = gaussian(d.rows(), cfg.rank, rng, 0.3);
    const MatrixXd g = gaussian(cfg.rank, d.cols(), rng, 0.3);
    const Objective o = cosa_objective(input.points(), label, clf, ex.ae.decoder, d, alpha, u, g, cfg);
    VectorXd x(u.size() + g.size()), analytic(x.size());
    x << u.reshaped(), g.reshaped();
    analytic << o.grad_u.reshaped(), o.grad_gamma.reshaped();
    auto f = [&](const VectorXd& p) {
      return cosa_objective(input.points(), label, clf, ex.ae.decoder, d, alpha,
                            p.head(u.size()).reshaped(u.rows(), u.cols()),
                            p.tail(g.size()).reshaped(g.rows(), g.cols()), cfg)
          .loss;
    };
    const auto rep = nn::grad_check(f, analytic, x, kGradStep, kGradTol, true);
    if (rep.skipped == rep.coordinates) {
      ++skipped_instances;
      continue;
    }
    skipped_coords += rep.skipped;
    worst = std::max(worst, rep.max_rel_error);
    ++checked;
  }
  const double secs = seconds_since(t0);
  v.report(1, checked >= kGradInstances && worst <= kGradTol && secs <= kGradSeconds,
           fmt("full-objective gradient vs central differences (step %.0e): max rel err %.3e over %d instances "
               "(tol %.0e); %ld tie-affected coordinates excluded, %d instances fully tied; %.1f s (limit %.0f s)",
               kGradStep, worst, checked, kGradTol, skipped_coords, skipped_instances, secs, kGradSeconds));
}

void criterion2(Verdicts& v) {
  const auto t0 = clk::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> lam(0.01, 1.0);
  double worst_kkt = 0.0;
  int solved = 0;
  for (int t = 0; t < kKktInstances; ++t) {
    const MatrixXd d = gaussian(32, 5, rng);
    const VectorXd z = gaussian(32, 1, rng);
    const double lambda = lam(rng);
    try {
      const SparseCode s = sparse_code(z, d, lambda);
      worst_kkt = std::max(worst_kkt, lasso_residual(z, d, s.alpha, lambda));
      ++solved;
    } catch (const ConvergenceError& e) {
      worst_kkt = std::max(worst_kkt, e.best().residual);
    }
  }
  VectorXd u(3);
  u << 0.6, 0.0, 0.8;
  const double closed = std::abs(sparse_code(u, MatrixXd(u), 0.5).alpha(0) - 0.75);

  double worst_gap = 0.0;
  for (int t = 0; t < 3; ++t) {
    const MatrixXd d = gaussian(4, 2, rng);
    const VectorXd z = d * VectorXd::Constant(2, 0.5) + 0.1 * gaussian(4, 1, rng);
    const double lambda = 0.3;
    const SparseCode s = sparse_code(z, d, lambda);
    const MatrixXd g = d.transpose() * d;
    const VectorXd dz = d.transpose() * z;
    const double zz = z.squaredNorm();
    double best = std::numeric_limits<double>::infinity();
    for (int i = -3000; i <= 3000; ++i) {
      const double a = i * 1e-3;
      for (int j = -3000; j <= 3000; ++j) {
        const double b = j * 1e-3;
        best = std::min(best, zz - 2.0 * (a * dz(0) + b * dz(1)) + a * a * g(0, 0) + 2.0 * a * b * g(0, 1) +
                                  b * b * g(1, 1) + lambda * (std::abs(a) + std::abs(b)));
      }
    }
    worst_gap = std::max(worst_gap, std::abs(s.objective - best));
  }
  const double secs = seconds_since(t0);
  v.report(2,
           solved == kKktInstances && worst_kkt <= kKktTol && closed <= kClosedFormTol && worst_gap <= kGridGap &&
               secs <= kSparseSeconds,
           fmt("ISTA KKT residual max %.2e over %d/%d converged instances (tol %.0e); 1-D closed form error %.1e "
               "(tol %.0e); grid-oracle objective gap %.2e (tol %.0e); %.1f s",
               worst_kkt, solved, kKktInstances, kKktTol, closed, kClosedFormTol, worst_gap, kGridGap, secs));
}

double brute_chamfer(const Points& p, const Points& q) {
  auto side = [](const Points& a, const Points& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
      s += best;
    }
    return s / static_cast<double>(a.rows());
  };
  return side(p, q) + side(q, p);
}

double brute_hausdorff(const Points& p, const Points& q) {
  auto side = [](const Points& a, const Points& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(side(p, q), side(q, p));
}

void criterion3(Verdicts& v, double worst_clip_excess, std::size_t clip_outputs) {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> size(1, 64);
  double worst = 0.0;
  bool exact = true;
  for (int t = 0; t < kOraclePairs; ++t) {
    const Points p = random_cloud(size(rng), rng), q = random_cloud(size(rng), rng);
    worst = std::max({worst, std::abs(chamfer(p, q) - brute_chamfer(p, q)),
                      std::abs(hausdorff(p, q) - brute_hausdorff(p, q))});
    exact = exact && chamfer(p, p) == 0.0 && hausdorff(p, p) == 0.0 && chamfer(p, q) == chamfer(q, p) &&
            hausdorff(p, q) == hausdorff(q, p);
  }
  v.report(3, worst <= kOracleTol && exact && clip_outputs > 0 && worst_clip_excess <= kClipSlack,
           fmt("brute-force oracle max |diff| %.1e over %d pairs (tol %.0e); identity/symmetry exact: %s; "
               "max(linf - eps) over %zu attack outputs %.1e (slack %.0e)",
               worst, kOraclePairs, kOracleTol, exact ? "yes" : "no", clip_outputs, worst_clip_excess, kClipSlack));
}

struct SubspaceStats {
  int snapshots = 0;
  int max_rank = 0;
  double max_ortho = 0.0;
  double nuclear_err = 0.0;
  int ortho_violations = 0;
};

void accumulate_subspace(SubspaceStats& s, const AttackResult& r) {
  for (const auto& snap : r.snapshots) {
    ++s.snapshots;
    const MatrixXd ug = snap.u * snap.gamma;
    const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(ug).singularValues();
    int above = 0;
    for (double x : sv) above += x > kSingularFloor;
    s.max_rank = std::max(s.max_rank, above);
    const double ortho =
        (snap.u.transpose() * snap.u - MatrixXd::Identity(snap.u.cols(), snap.u.cols())).norm();
    s.max_ortho = std::max(s.max_ortho, ortho);
    s.ortho_violations += ortho > kOrthoBound;
    // Eigenvalues of [0 G; G^T 0] are +-sigma.
    const Eigen::Index m = snap.gamma.rows(), k = snap.gamma.cols();
    MatrixXd aug = MatrixXd::Zero(m + k, m + k);
    aug.topRightCorner(m, k) = snap.gamma;
    aug.bottomLeftCorner(k, m) = snap.gamma.transpose();
    const double oracle =
        0.5 * Eigen::SelfAdjointEigenSolver<MatrixXd>(aug, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().sum();
    s.nuclear_err = std::max(s.nuclear_err, std::abs(nuclear_norm(snap.gamma) - oracle));
  }
}

void report_criterion4(Verdicts& v, const SubspaceStats& s, int rank) {
  v.report(4, s.snapshots > 0 && s.max_rank <= rank && s.max_ortho <= kOrthoBound && s.nuclear_err <= kNuclearTol,
           fmt("%d iterates sampled every 100 steps: max #singular values of U*Gamma above %.0e is %d (r = %d); "
               "max ||U^T U - I||_F %.3g (bound %.1f, %d iterates above); nuclear norm vs augmented eigen oracle %.1e (tol %.0e)",
               s.snapshots, kSingularFloor, s.max_rank, rank, s.max_ortho, kOrthoBound, s.ortho_violations,
               s.nuclear_err, kNuclearTol));
}

// White-box run of the full attack on the surrogate with iterate snapshots.
struct WhiteBox {
  double asr = 0.0;
  int eligible = 0;
  double secs = 0.0;
  double worst_clip_excess = -std::numeric_limits<double>::infinity();
  std::size_t outputs = 0;
  double mean_pre_clip = 0.0;
  double mean_cd = 0.0;
  SubspaceStats subspace;
};

WhiteBox white_box(const Experiment& ex, MisLoss loss) {
  WhiteBox w;
  const nn::Classifier& clf = ex.classifiers.at(kSource);
  std::vector<AdvSample> samples;
  const auto t0 = clk::now();
  for (std::size_t i = 0; i < ex.test.size(); ++i) {
    AttackConfig cfg = ex.cfg.attack;
    cfg.misloss = loss;
    cfg.eps = kEps;
    cfg.seed = input_seed(kSeeds[0], i);
    cfg.snapshot_every = 100;
    const Points& clean = ex.test[i].points();
    const int label = *ex.test[i].label();
    const AttackResult r = cosa_attack(clean, label, clf, ex.ae, ex.dictionaries, cfg);
    samples.push_back({clean, r.adversarial, label});
    w.worst_clip_excess = std::max(w.worst_clip_excess, linf_distortion(r.adversarial, clean) - kEps);
    w.mean_pre_clip += r.pre_clip_linf;
    w.mean_cd += r.distortion.cd;
    ++w.outputs;
    accumulate_subspace(w.subspace, r);
  }
  w.secs = seconds_since(t0);
  w.mean_pre_clip /= static_cast<double>(w.outputs);
  w.mean_cd /= static_cast<double>(w.outputs);
  const AsrResult a = evaluate_asr(samples, clf);
  w.asr = a.asr;
  w.eligible = a.eligible;
  return w;
}

// Transfer ASR per (mode, seed, target) with and without sor.
struct Ablation {
  std::map<std::string, std::map<std::string, std::vector<double>>> asr;  // mode -> target -> per seed
  std::map<std::string, std::vector<double>> sor_full;                    // target -> per seed
  double secs = 0.0;
};

double cell_asr(const std::vector<TransferCell>& cells, const std::string& target) {
  for (const auto& c : cells) {
    if (c.target != target) continue;
    if (!c.error.empty()) {
      note("cell " + c.source + "->" + c.target + " " + c.attack + " error: " + c.error);
      if (c.samples == 0) return std::numeric_limits<double>::quiet_NaN();
    }
    return c.asr;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Ablation ablation(Experiment ex, MisLoss loss) {
  ex.cfg.attack.misloss = loss;
  ex.cfg.defense.sor_k = 8;
  ex.cfg.defense.sor_alpha = 1.1;
  Ablation out;
  const auto t0 = clk::now();
  for (const char* mode : {"none", "s_only", "b_only", "full"}) {
    for (std::uint64_t seed : kSeeds) {
      const auto recs = run_attacks(ex, kSource, mode, kEps, seed);
      const auto cells = evaluate_records(ex, recs, kSource, mode, kEps, DefenseKind::None);
      std::string line = fmt("%s seed %llu:", mode, static_cast<unsigned long long>(seed));
      for (const char* t : kTargets) {
        out.asr[mode][t].push_back(cell_asr(cells, t));
        line += fmt(" %s->%s %.2f", kSource, t, out.asr[mode][t].back());
      }
      line += fmt(" (white-box %.2f)", cell_asr(cells, kSource));
      if (std::string(mode) == "full") {
        const auto def = evaluate_records(ex, recs, kSource, mode, kEps, DefenseKind::Sor);
        line += " | sor:";
        for (const char* t : kTargets) {
          out.sor_full[t].push_back(cell_asr(def, t));
          line += fmt(" %s->%s %.2f", kSource, t, out.sor_full[t].back());
        }
      }
      note(line);
    }
  }
  out.secs = seconds_since(t0);
  return out;
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(xs.size());
}

// Ordering and defense checks; returns {ordering ok, retention ok} and logs the details.
std::pair<bool, bool> judge_ablation(const Ablation& a, std::string& ordering, std::string& retention) {
  bool order_ok = true;
  for (const char* t : kTargets) {
    const double full = mean(a.asr.at("full").at(t)), none = mean(a.asr.at("none").at(t));
    const double s_only = mean(a.asr.at("s_only").at(t)), b_only = mean(a.asr.at("b_only").at(t));
    const bool ok = full - none >= kOrderingGap && full >= s_only && full >= b_only;
    order_ok = order_ok && ok;
    ordering += fmt("%s%s->%s full %.2f none %.2f s_only %.2f b_only %.2f (full-none %+.2f)", ordering.empty() ? "" : "; ",
                    kSource, t, full, none, s_only, b_only, full - none);
  }
  std::vector<double> undefended, defended;
  for (const char* t : kTargets) {
    for (double x : a.asr.at("full").at(t)) undefended.push_back(x);
    for (double x : a.sor_full.at(t)) defended.push_back(x);
  }
  const double u = mean(undefended), d = mean(defended);
  const double ratio = u > 0.0 ? d / u : std::numeric_limits<double>::quiet_NaN();
  retention = fmt("full transfer ASR undefended %.2f, under sor(k=8, alpha=1.1) %.2f, retained %.1f%% (bar %.0f%%)", u,
                  d, 100.0 * ratio, 100.0 * kSorRetention);
  return {order_ok, ratio >= kSorRetention};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

void criterion9(Verdicts& v, const fs::path& cli, const fs::path& work) {
  if (cli.empty() || !fs::exists(cli)) {
    v.report(9, false, "cosa executable not given or missing: " + cli.string());
    return;
  }
  const nlohmann::json cfg = {
      {"version", 1},
      {"seed", 7},
      {"output", "out"},
      {"dataset", {{"dir", "data"}, {"train_per_class", 6}, {"test_per_class", 2}, {"num_points", 64}}},
      {"models",
       {{"autoencoder", "models/ae.json"},
        {"dictionary", "models/dict.json"},
        {"classifiers", {{"A", "models/A.json"}, {"B", "models/B.json"}, {"C", "models/C.json"}}}}},
      {"training", {{"autoencoder", {{"epochs", 20}}}, {"classifier", {{"epochs", 10}}}}},
      {"attack", {{"eps", {0.18, 0.45}}, {"iters", 20}, {"max_inputs", 4}}},
      {"ablation", {{"seeds", {1, 2}}, {"source", "A"}}}};
  const char* steps[] = {"gen-data", "train-ae", "train-clf", "build-dict", "attack",
                         "defend",   "eval",     "ablate",    "export-protos", "report"};
  // Both runs use the same directory, so recorded paths agree too.
  std::map<std::string, std::string> runs[2];
  const fs::path dir = work / "determinism";
  for (int r = 0; r < 2; ++r) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "cfg.json") << cfg.dump(2);
    for (const char* step : steps) {
      const std::string cmd = "\"" + cli.string() + "\" " + step + " --config \"" + (dir / "cfg.json").string() +
                              "\" > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        v.report(9, false, std::string("pipeline step failed: ") + step);
        return;
      }
    }
    fs::remove(dir / "cfg.json");
    runs[r] = tree_contents(dir);
  }
  std::size_t differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) {
      ++differing;
      note("differs: " + name);
    }
  }
  differing += runs[1].size() > runs[0].size() ? runs[1].size() - runs[0].size() : 0;
  v.report(9, differing == 0 && !runs[0].empty(),
           fmt("full CLI pipeline (10 subcommands) run twice: %zu files compared, %zu differ", runs[0].size(),
               differing));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale acceptance run"};
  fs::path work = "acceptance_work";
  fs::path cli;
  bool skip_supplementary = false;
  app.add_option("--work", work, "scratch directory for data, models and results");
  app.add_option("--cli", cli, "path to the cosa executable (determinism check)");
  app.add_flag("--skip-supplementary", skip_supplementary, "skip the margin-loss supplementary runs");
  CLI11_PARSE(app, argc, argv);

  Verdicts v;
  fs::create_directories(work);

  // Desk dataset and models.
  Experiment ex;
  ex.cfg.classifiers = {{"A", ""}, {"B", ""}, {"C", ""}};
  DatasetConfig dc;
  dc.out_dir = work / "data";
  ex.manifest = make_dataset(dc);
  ex.train = load_split(ex.manifest, ex.manifest.train);
  ex.test = load_split(ex.manifest, ex.manifest.test);
  for (const auto& e : ex.manifest.test) ex.test_names.push_back(e.path);
  std::cout << "desk dataset: " << ex.train.size() << " train / " << ex.test.size() << " test clouds, n = "
            << ex.manifest.n << std::endl;

  std::string quality;
  bool quality_ok = true;
  {
    const auto t0 = clk::now();
    auto [ae, rep] = nn::train_autoencoder(ex.train, ex.test, ex.cfg.ae_hyper, ex.cfg.seed);
    const double secs = seconds_since(t0);
    ex.ae = std::move(ae);
    quality_ok = quality_ok && rep.metric <= kAeCd && secs <= kTrainSeconds;
    quality += fmt("AE held-out CD %.5f (bar %.2f) in %.0f s", rep.metric, kAeCd, secs);
  }
  for (const char* name : {"A", "B", "C"}) {
    const auto t0 = clk::now();
    auto [clf, rep] = nn::train_classifier(nn::arch_from_name(name), ex.manifest.num_classes, ex.train, ex.test,
                                           ex.cfg.clf_hyper, ex.cfg.seed);
    const double secs = seconds_since(t0);
    ex.classifiers[name] = std::move(clf);
    quality_ok = quality_ok && rep.metric >= kClfAccuracy && secs <= kTrainSeconds;
    quality += fmt("; %s test acc %.1f%% in %.0f s", name, 100.0 * rep.metric, secs);
  }
  quality += fmt(" (limit %.0f s each)", kTrainSeconds);
  ex.dictionaries = build_dictionaries(ex.ae.encoder, ex.train, ex.cfg.attack.prototypes, ex.cfg.seed);

  criterion1(v, ex);
  criterion2(v);

  const WhiteBox wb = white_box(ex, MisLoss::NegCE);
  criterion3(v, wb.worst_clip_excess, wb.outputs);
  report_criterion4(v, wb.subspace, ex.cfg.attack.rank);
  v.report(5, quality_ok, quality);
  v.report(6, wb.asr >= kWhiteBoxAsr && wb.secs <= kWhiteBoxSeconds,
           fmt("white-box ASR on %s at eps %.2f (misloss neg_ce): %.2f%% over %d eligible of %zu inputs (bar %.0f%%); "
               "mean pre-clip linf %.3f, mean CD %.4f; %.0f s (limit %.0f s)",
               kSource, kEps, wb.asr, wb.eligible, wb.outputs, kWhiteBoxAsr, wb.mean_pre_clip, wb.mean_cd, wb.secs,
               kWhiteBoxSeconds));

  const Ablation ab = ablation(ex, MisLoss::NegCE);
  std::string ordering, retention;
  const auto [order_ok, retain_ok] = judge_ablation(ab, ordering, retention);
  v.report(7, order_ok, "neg_ce, mean over seeds 1-3: " + ordering);
  v.report(8, retain_ok, "neg_ce: " + retention);

  criterion9(v, cli, work);

  if (!skip_supplementary) {
    std::cout << "supplementary (not judged): same runs with the margin loss (kappa = 0)" << std::endl;
    const WhiteBox m = white_box(ex, MisLoss::Margin);
    std::cout << "supplementary 4: "
              << fmt("%d iterates, max rank %d, max ||U^T U - I||_F %.3g, nuclear err %.1e", m.subspace.snapshots,
                     m.subspace.max_rank, m.subspace.max_ortho, m.subspace.nuclear_err)
              << std::endl;
    std::cout << "supplementary 6: "
              << fmt("white-box ASR %.2f%% over %d eligible, mean pre-clip linf %.3f, mean CD %.4f, %.0f s", m.asr,
                     m.eligible, m.mean_pre_clip, m.mean_cd, m.secs)
              << std::endl;
    const Ablation mab = ablation(ex, MisLoss::Margin);
    std::string mo, mr;
    const auto [mo_ok, mr_ok] = judge_ablation(mab, mo, mr);
    std::cout << "supplementary 7: " << (mo_ok ? "holds" : "does not hold") << "  " << mo << std::endl;
    std::cout << "supplementary 8: " << (mr_ok ? "holds" : "does not hold") << "  " << mr << std::endl;
  }

  int passed = 0;
  for (const auto& r : v.results) passed += r.second;
  std::cout << passed << "/" << v.results.size() << " criteria passed" << std::endl;
  return v.all() ? 0 : 1;
}
