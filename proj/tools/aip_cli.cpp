// aip: teacher training, adversarial iterative pruning, retraining and
// reporting over run directories.
//
// Run directory layout:
//   config.snapshot  teacher.ckpt  student_epoch_<e>.ckpt  pruned.ckpt
//   retrained.ckpt  plans/plan_<e>.txt  scores/scores_<e>.csv  log.csv
//   report.txt  survival.csv  ablation.csv  plots/

#include "aip/checkpoint.hpp"
#include "aip/config.hpp"
#include "aip/errors.hpp"
#include "aip/io.hpp"
#include "aip/metrics.hpp"
#include "aip/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using namespace aip;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitDivergence = 4;

struct Options {
  std::string config;
  std::string run_dir;
  std::optional<double> k;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string teacher;
  std::string losses;
  std::optional<int> epochs;
  std::string ckpt = "retrained";
  std::string split = "test";
  std::vector<std::string> run_dirs;
  std::optional<int> score_epoch;
  std::string csv;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/// Effective config: --config, else the run directory's snapshot, plus
/// command-line overrides. Validated before anything runs.
RunConfig resolve_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else if (!o.run_dir.empty() && fs::exists(fs::path(o.run_dir) / "config.snapshot")) {
    cfg = parse_config(read_text(fs::path(o.run_dir) / "config.snapshot"));
  } else {
    throw ConfigError("--config is required (no config.snapshot in the run directory)");
  }
  if (o.k) cfg.k = *o.k;
  if (o.seed) cfg.seed = *o.seed;
  if (!o.losses.empty()) cfg.loss_components = parse_loss_components(o.losses);
  validate(cfg);
  return cfg;
}

fs::path resolve_run_dir(const Options& o, const RunConfig& cfg) {
  return o.run_dir.empty() ? fs::path(cfg.out_dir) / cfg.name : fs::path(o.run_dir);
}

bool skip_existing(const fs::path& artifact, bool force) {
  if (force || !fs::exists(artifact)) return false;
  std::cout << artifact.string() << " exists; nothing to do (use --force to recompute)\n";
  return true;
}

Checkpoint require_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact(path.string());
  return load_checkpoint(path);
}

std::string summary(const std::vector<std::pair<std::string, double>>& fields) {
  std::string s;
  for (const auto& [k, v] : fields) s += k + ": " + fmt("%.10g", v) + "\n";
  return s;
}

void write_snapshot(const fs::path& run, const RunConfig& cfg) { write_atomic(run / "config.snapshot", serialize(cfg)); }

int channel_total(const NetworkDescriptor& d) {
  int total = 0;
  for (int l : d.prunable) total += d.layers[l].out_channels;
  return total;
}

int cmd_train_teacher(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path run = resolve_run_dir(o, cfg);
  if (skip_existing(run / "teacher.ckpt", o.force)) return 0;
  fs::create_directories(run);
  write_snapshot(run, cfg);
  const TrainingData data = load_data(cfg);
  TrainLog log(run / "log.csv");
  std::vector<EpochSummary> history;
  Checkpoint ckpt;
  ckpt.network = pretrain_teacher(cfg, data, &log, &history);
  const double acc = evaluate(ckpt.network, data.splits.test, data.norm);
  ckpt.config_snapshot = serialize(cfg);
  ckpt.epoch = cfg.baseline_epochs;
  ckpt.metrics_summary = summary({{"accuracy", acc},
                                  {"train_accuracy", history.empty() ? 0.0 : history.back().train_accuracy},
                                  {"params", static_cast<double>(count_params(ckpt.network.descriptor()))}});
  save_checkpoint(ckpt, run / "teacher.ckpt");
  std::cout << "teacher: test accuracy " << fmt("%.4f", acc) << ", " << count_params(ckpt.network.descriptor())
            << " parameters -> " << (run / "teacher.ckpt").string() << "\n";
  return 0;
}

MetricsReport report_for(const Checkpoint& ckpt, const std::string& label) {
  MetricsReport r = measure(ckpt.network.descriptor(), label);
  r.accuracy = summary_value(ckpt.metrics_summary, "accuracy");
  return r;
}

void write_report(const fs::path& run, const Checkpoint& teacher, const Checkpoint& pruned,
                  const std::optional<Checkpoint>& retrained, double k) {
  MetricsReport base = report_for(teacher, "teacher");
  MetricsReport after = report_for(pruned, "pruned k=" + fmt("%g", k));
  after.per_layer = survival(teacher.network.descriptor(), pruned.network.descriptor());
  attach_drops(base, after);
  std::string text = serialize(after);
  std::vector<MetricsReport> rows{after};
  if (retrained) {
    MetricsReport re = report_for(*retrained, "retrained k=" + fmt("%g", k));
    attach_drops(base, re);
    rows.push_back(re);
    text += "retrained_accuracy: " + (re.accuracy ? format_pct(100.0 * *re.accuracy) : std::string("-")) + "\n";
  }
  text += "\n" + comparison_table(base, rows);
  write_atomic(run / "report.txt", text);

  std::string csv = "layer,name,original,kept\n";
  for (const auto& s : after.per_layer)
    csv += std::to_string(s.layer) + "," + s.name + "," + std::to_string(s.original) + "," + std::to_string(s.kept) + "\n";
  write_atomic(run / "survival.csv", csv);
}

int cmd_prune(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path run = resolve_run_dir(o, cfg);
  const fs::path teacher_path = o.teacher.empty() ? run / "teacher.ckpt" : fs::path(o.teacher);
  Checkpoint teacher = require_checkpoint(teacher_path);
  if (skip_existing(run / "pruned.ckpt", o.force)) return 0;
  fs::create_directories(run / "plans");
  fs::create_directories(run / "scores");
  write_snapshot(run, cfg);
  if (!fs::exists(run / "teacher.ckpt") || !fs::equivalent(teacher_path, run / "teacher.ckpt"))
    save_checkpoint(teacher, run / "teacher.ckpt");

  const TrainingData data = load_data(cfg);
  if (!(data.splits.train.shape == teacher.network.descriptor().input))
    throw ConfigError("teacher expects input " + to_string(teacher.network.descriptor().input) + " but dataset has " +
                      to_string(data.splits.train.shape));
  TrainLog log(run / "log.csv");
  int last_saved = 0;
  PruneHooks hooks;
  hooks.on_event = [&](const PruneEvent& e, const Network<float>&, const ImportanceState&) {
    const std::string tag = std::to_string(e.epoch);
    write_atomic(run / "plans" / ("plan_" + tag + ".txt"), serialize(e.plan, e.before));
    export_scores(e.scores, run / "scores" / ("scores_" + tag + ".csv"));
    std::cout << "epoch " << e.epoch << ": pruned " << e.params_before << " -> " << e.params_after
              << " parameters, " << e.flops_before.macs << " -> " << e.flops_after.macs << " MACs\n";
  };
  hooks.on_epoch_end = [&](int epoch, const Network<float>& student, const Discriminator<float>& disc) {
    Checkpoint c;
    c.network = student;
    c.discriminator = disc;
    c.config_snapshot = serialize(cfg);
    c.epoch = epoch;
    save_checkpoint(c, run / ("student_epoch_" + std::to_string(epoch) + ".ckpt"));
    last_saved = epoch;
  };

  PruneResult result;
  try {
    result = iterative_prune(teacher.network, cfg, data, hooks, &log);
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + (last_saved > 0 ? "; last good checkpoint: " +
                                                                        (run / ("student_epoch_" + std::to_string(last_saved) + ".ckpt")).string()
                                                                  : std::string("; no student checkpoint written")));
  }

  Checkpoint pruned;
  pruned.network = std::move(result.student);
  pruned.discriminator = std::move(result.discriminator);
  const double acc = evaluate(pruned.network, data.splits.test, data.norm);
  pruned.config_snapshot = serialize(cfg);
  pruned.epoch = cfg.N;
  pruned.metrics_summary = summary({{"accuracy", acc},
                                    {"params", static_cast<double>(count_params(pruned.network.descriptor()))},
                                    {"events", static_cast<double>(result.events.size())}});
  save_checkpoint(pruned, run / "pruned.ckpt");
  const std::optional<Checkpoint> none;
  write_report(run, teacher, pruned, none, cfg.k);
  std::cout << read_text(run / "report.txt");
  return 0;
}

int cmd_retrain(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path run = resolve_run_dir(o, cfg);
  Checkpoint teacher = require_checkpoint(run / "teacher.ckpt");
  Checkpoint pruned = require_checkpoint(run / "pruned.ckpt");
  if (skip_existing(run / "retrained.ckpt", o.force)) return 0;
  const TrainingData data = load_data(cfg);
  TrainLog log(run / "log.csv");
  Checkpoint out;
  out.network = retrain_from_scratch(pruned.network.descriptor(), teacher.network, cfg, data, retrain_losses(cfg),
                                     &log, o.epochs);
  const double acc = evaluate(out.network, data.splits.test, data.norm);
  out.config_snapshot = serialize(cfg);
  out.metrics_summary = summary({{"accuracy", acc}});
  save_checkpoint(out, run / "retrained.ckpt");
  write_report(run, teacher, pruned, out, cfg.k);
  std::cout << "retrained (" << to_string(retrain_losses(cfg)) << "): test accuracy " << fmt("%.4f", acc) << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path run = resolve_run_dir(o, cfg);
  fs::path path = o.ckpt;
  if (o.ckpt == "teacher" || o.ckpt == "pruned" || o.ckpt == "retrained") path = run / (o.ckpt + ".ckpt");
  Checkpoint ckpt = require_checkpoint(path);
  if (o.split != "train" && o.split != "test") throw ConfigError("--split must be train or test");
  const TrainingData data = load_data(cfg);
  const Dataset& split = o.split == "train" ? data.splits.train : data.splits.test;
  const double acc = evaluate(ckpt.network, split, data.norm);
  MetricsReport r = measure(ckpt.network.descriptor(), path.filename().string());
  r.accuracy = acc;
  std::cout << "accuracy: " << fmt("%.6f", acc) << "\n" << serialize(r);
  return 0;
}

int cmd_report(const Options& o) {
  std::vector<std::string> dirs = o.run_dirs;
  if (dirs.empty() && !o.run_dir.empty()) dirs.push_back(o.run_dir);
  if (dirs.empty()) throw ConfigError("report needs at least one --run-dir");
  const Checkpoint teacher = require_checkpoint(fs::path(dirs.front()) / "teacher.ckpt");
  MetricsReport base = report_for(teacher, "Baseline");
  const int base_channels = channel_total(teacher.network.descriptor());
  std::vector<MetricsReport> rows;
  std::string sweep = "run,k,accuracy,params_drop_pct,flops_drop_pct,channels_drop_pct\n";
  for (const auto& d : dirs) {
    const fs::path run(d);
    const RunConfig cfg = parse_config(read_text(run / "config.snapshot"));
    // An unpruned run reports its teacher, which yields zero drops.
    const fs::path pruned_path = run / "pruned.ckpt";
    const Checkpoint pruned = fs::exists(pruned_path) ? load_checkpoint(pruned_path) : require_checkpoint(run / "teacher.ckpt");
    MetricsReport r = report_for(pruned, "AIP k=" + fmt("%g", cfg.k));
    if (fs::exists(run / "retrained.ckpt")) r.accuracy = report_for(load_checkpoint(run / "retrained.ckpt"), "").accuracy;
    attach_drops(base, r);
    const double ch_drop = 100.0 * (base_channels - channel_total(pruned.network.descriptor())) / base_channels;
    sweep += run.filename().string() + "," + fmt("%g", cfg.k) + "," +
             (r.accuracy ? fmt("%.6f", *r.accuracy) : std::string("")) + "," + format_pct(r.params_drop_pct) + "," +
             format_pct(r.flops_drop_pct) + "," + format_pct(ch_drop) + "\n";
    rows.push_back(r);
  }
  std::cout << comparison_table(base, rows);
  if (!o.csv.empty()) write_atomic(o.csv, sweep);
  return 0;
}

std::string density_svg(const std::string& title, const Eigen::VectorXd& scores) {
  constexpr int kW = 480, kH = 300, kPad = 40, kPoints = 200;
  const double n = static_cast<double>(scores.size());
  const double mean = scores.mean();
  const double sd = n > 1 ? std::sqrt((scores.array() - mean).square().sum() / (n - 1)) : 0.0;
  const double bw = std::max(0.02, 1.06 * sd * std::pow(n, -0.2));
  std::vector<double> density(kPoints + 1);
  for (int i = 0; i <= kPoints; ++i) {
    const double x = static_cast<double>(i) / kPoints;
    double s = 0;
    for (double v : scores) s += std::exp(-0.5 * std::pow((x - v) / bw, 2));
    density[i] = s / (n * bw * std::sqrt(2 * std::numbers::pi));
  }
  const double peak = std::max(1e-12, *std::max_element(density.begin(), density.end()));
  auto px = [&](double x) { return kPad + x * (kW - 2 * kPad); };
  auto py = [&](double y) { return kH - kPad - y / peak * (kH - 2 * kPad); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(0) << "\" y2=\"" << py(peak)
     << "\" stroke=\"black\"/>\n";
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0})
    os << "<text x=\"" << px(t) << "\" y=\"" << kH - kPad + 16 << "\" text-anchor=\"middle\" font-size=\"11\">" << t
       << "</text>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 6 << "\" text-anchor=\"middle\" font-size=\"12\">importance score</text>\n";
  os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (int i = 0; i <= kPoints; ++i) os << px(static_cast<double>(i) / kPoints) << "," << py(density[i]) << " ";
  os << "\"/>\n";
  for (double v : scores)
    os << "<line x1=\"" << px(v) << "\" y1=\"" << py(0) << "\" x2=\"" << px(v) << "\" y2=\"" << py(0) - 6
       << "\" stroke=\"gray\"/>\n";
  os << "</svg>\n";
  return os.str();
}

int cmd_plot_scores(const Options& o) {
  if (o.run_dir.empty()) throw ConfigError("plot-scores needs --run-dir");
  const fs::path run(o.run_dir);
  int epoch = -1;
  if (o.score_epoch) {
    epoch = *o.score_epoch;
  } else if (fs::exists(run / "scores")) {
    for (const auto& entry : fs::directory_iterator(run / "scores")) {
      int e = 0;
      if (std::sscanf(entry.path().filename().string().c_str(), "scores_%d.csv", &e) == 1) epoch = std::max(epoch, e);
    }
  }
  const fs::path csv = run / "scores" / ("scores_" + std::to_string(std::max(epoch, 0)) + ".csv");
  if (epoch < 0 || !fs::exists(csv)) throw MissingArtifact(csv.string());
  const auto scores = import_scores(csv);
  fs::create_directories(run / "plots");
  for (const auto& [layer, values] : scores) {
    const fs::path out = run / "plots" / ("scores_" + std::to_string(epoch) + "_layer" + std::to_string(layer) + ".svg");
    write_atomic(out, density_svg("layer " + std::to_string(layer) + ", epoch " + std::to_string(epoch), values));
    std::cout << out.string() << "\n";
  }
  return 0;
}

int cmd_ablate(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path run = resolve_run_dir(o, cfg);
  Checkpoint teacher = require_checkpoint(run / "teacher.ckpt");
  Checkpoint pruned = require_checkpoint(run / "pruned.ckpt");
  if (skip_existing(run / "ablation.csv", o.force)) return 0;
  const TrainingData data = load_data(cfg);
  TrainLog log(run / "ablation_log.csv");
  std::string csv = "at,kd,adv,accuracy,at_loss,kd_loss,adv_loss,total\n";
  auto mark = [](bool b) { return b ? std::string("yes") : std::string("no"); };
  for (const char* combo : {"at", "kd", "adv", "at,kd", "kd,adv", "at,adv", "at,kd,adv"}) {
    const LossComponents lc = parse_loss_components(combo);
    std::vector<EpochSummary> history;
    Network<float> net =
        retrain_from_scratch(pruned.network.descriptor(), teacher.network, cfg, data, lc, &log, o.epochs, &history);
    const double acc = evaluate(net, data.splits.test, data.norm);
    const StepLosses last = history.empty() ? StepLosses{} : history.back().mean;
    csv += mark(lc.at) + "," + mark(lc.kd) + "," + mark(lc.adv) + "," + fmt("%.6f", acc) + "," + fmt("%.6g", last.at) +
           "," + fmt("%.6g", last.kd) + "," + fmt("%.6g", last.adv) + "," + fmt("%.6g", last.total) + "\n";
    std::cout << to_string(lc) << ": accuracy " << fmt("%.4f", acc) << "\n";
  }
  write_atomic(run / "ablation.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial iterative pruning"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "run configuration (key = value)");
    if (needs_config) c->check(CLI::ExistingFile);
    sub->add_option("--run-dir", o.run_dir, "run directory (default: out_dir/name)");
    sub->add_option("--k", o.k, "override the pruning factor");
    sub->add_option("--seed", o.seed, "override the seed");
    sub->add_flag("--force", o.force, "recompute existing artifacts");
  };

  auto* train = app.add_subcommand("train-teacher", "train the teacher from scratch");
  common(train, false);
  auto* prune = app.add_subcommand("prune", "adversarial iterative pruning of the teacher");
  common(prune, false);
  prune->add_option("--teacher", o.teacher, "teacher checkpoint (default: <run-dir>/teacher.ckpt)");
  prune->add_option("--losses", o.losses, "loss components, e.g. at,kd,adv");
  auto* retrain = app.add_subcommand("retrain", "retrain the pruned architecture from scratch");
  common(retrain, false);
  retrain->add_option("--losses", o.losses, "loss components (default at,kd)");
  retrain->add_option("--epochs", o.epochs, "override the FLOPs-scaled epoch budget");
  auto* eval = app.add_subcommand("eval", "top-1 accuracy of a checkpoint");
  common(eval, false);
  eval->add_option("--ckpt", o.ckpt, "teacher | pruned | retrained | path");
  eval->add_option("--split", o.split, "train | test");
  auto* report = app.add_subcommand("report", "comparison table over one or more runs");
  report->add_option("--run-dir", o.run_dirs, "run directories; the first supplies the baseline")->required();
  report->add_option("--csv", o.csv, "also write the k-sweep series as CSV");
  auto* plot = app.add_subcommand("plot-scores", "per-layer importance density plots (SVG)");
  plot->add_option("--run-dir", o.run_dir, "run directory")->required();
  plot->add_option("--epoch", o.score_epoch, "pruning epoch (default: latest)");
  auto* ablate = app.add_subcommand("ablate", "retrain under each of the seven loss combinations");
  common(ablate, false);
  ablate->add_option("--epochs", o.epochs, "override the FLOPs-scaled epoch budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train_teacher(o);
    if (prune->parsed()) return cmd_prune(o);
    if (retrain->parsed()) return cmd_retrain(o);
    if (eval->parsed()) return cmd_eval(o);
    if (report->parsed()) return cmd_report(o);
    if (plot->parsed()) return cmd_plot_scores(o);
    if (ablate->parsed()) return cmd_ablate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.path() << "\n";
    return kExitMissing;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
