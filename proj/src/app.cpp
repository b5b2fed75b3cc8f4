#include "bevodo/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "bevodo/audit.hpp"
#include "bevodo/config.hpp"
#include "bevodo/dataset.hpp"
#include "bevodo/evalkit.hpp"
#include "bevodo/params.hpp"
#include "bevodo/plot.hpp"
#include "bevodo/tum_io.hpp"
#include "json.hpp"

namespace bevodo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
  const char* v = std::getenv("BEVODO_LOG");
  if (!v) return LogLevel::kInfo;
  const std::string s = v;
  if (s == "quiet" || s == "error" || s == "0") return LogLevel::kQuiet;
  if (s == "debug" || s == "2") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(log_level())) std::cerr << "[bevodo] " << msg << "\n";
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

/// Marks an output directory as incomplete until the command finishes.
class PartialMarker {
 public:
  PartialMarker(const fs::path& dir, const std::string& command) : path_(dir / "PARTIAL") {
    fs::create_directories(dir);
    write_text(path_, "incomplete output of 'bevodo " + command + "'; files here may be missing or truncated\n");
  }
  void done() { fs::remove(path_); }

 private:
  fs::path path_;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

Pose2 pose2_of(const Eigen::Isometry3d& t) {
  const auto& r = t.linear();
  return Pose2{t.translation().x(), t.translation().y(), std::atan2(r(1, 0), r(0, 0))};
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  return 0.5 * (hi + *std::max_element(v.begin(), mid));
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve_config(const Common& c) {
  if (c.config.empty()) throw UsageError("--config is required");
  RunConfig cfg = load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.finalize();
  }
  return cfg;
}

// ---- synth ----------------------------------------------------------------

struct SynthOpts {
  Common common;
  std::optional<std::size_t> train_pairs, test_pairs, sequences;
};

void cmd_synth(const SynthOpts& o) {
  RunConfig cfg = resolve_config(o.common);
  if (o.train_pairs) cfg.dataset.train_pairs = *o.train_pairs;
  if (o.test_pairs) cfg.dataset.test_pairs = *o.test_pairs;
  if (o.sequences) cfg.dataset.sequences = *o.sequences;
  cfg.finalize();
  const fs::path out = o.common.out;
  PartialMarker mark(out, "synth");
  log(LogLevel::kInfo, "synthesizing " + std::to_string(cfg.dataset.train_pairs) + " training pairs, " +
                           std::to_string(cfg.dataset.test_pairs) + " test pairs, " +
                           std::to_string(cfg.dataset.sequences) + " sequence(s) into " + out.string());
  synthesize_dataset(cfg, out);
  write_text(out / "config.json", dump_config(cfg));
  mark.done();
}

// ---- train ----------------------------------------------------------------

struct TrainOpts {
  Common common;
  std::string data;
  std::optional<std::size_t> epochs, batch_size, max_pairs;
  std::optional<double> learning_rate;
  bool no_validity = false;
};

void cmd_train(const TrainOpts& o) {
  RunConfig cfg = resolve_config(o.common);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.learning_rate) cfg.train.learning_rate = *o.learning_rate;
  if (o.no_validity) cfg.train.use_validity_weights = false;
  cfg.train.warmup_epochs = std::min(cfg.train.warmup_epochs, cfg.train.epochs);
  cfg.finalize();
  const fs::path out = o.common.out;
  PartialMarker mark(out, "train");
  Dataset data = load_dataset(o.data);
  if (o.max_pairs && data.train.size() > *o.max_pairs) data.train.resize(*o.max_pairs);
  if (data.train.empty()) throw std::runtime_error("dataset has no training pairs");
  write_text(out / "model.config.json", dump_config(cfg));

  OdometryModel model(cfg.model);
  Trainer trainer(model, cfg.train);
  log(LogLevel::kInfo, "training on " + std::to_string(data.train.size()) + " pairs for " +
                           std::to_string(cfg.train.epochs) + " epochs (" +
                           std::to_string(model.params().total_size()) + " parameters)");
  std::ofstream csv(out / "train_log.csv", std::ios::binary);
  csv << "epoch,step,loss,skipped\n";
  json epochs = json::array();
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    const auto r = trainer.train_epoch(data.train, [&](const LogRow& row) {
      csv << row.epoch << "," << row.step << "," << fmt_double(row.loss) << "," << row.skipped << "\n";
    });
    csv.flush();
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu/%zu  loss %.4f  skipped %zu  %.1fs", e + 1, cfg.train.epochs,
                  r.mean_loss, r.skipped, r.seconds);
    log(LogLevel::kInfo, buf);
    epochs.push_back({{"epoch", e}, {"mean_loss", r.mean_loss}, {"skipped", r.skipped}});
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(out / "model.ckpt", model.params());
  json summary{{"pairs", data.train.size()}, {"epochs", epochs}};
  write_text(out / "train_summary.json", summary.dump(2) + "\n");
  log(LogLevel::kInfo, "training took " + fmt_double(seconds) + " s");
  mark.done();
}

// ---- infer ----------------------------------------------------------------

struct InferOpts {
  Common common;
  std::string checkpoint;
  std::string data;
};

void cmd_infer(const InferOpts& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  Common c = o.common;
  if (c.config.empty()) {
    const fs::path sidecar = fs::path(o.checkpoint).parent_path() / "model.config.json";
    if (!fs::exists(sidecar)) throw UsageError("--config is required (no model.config.json next to the checkpoint)");
    c.config = sidecar.string();
  }
  const RunConfig cfg = resolve_config(c);
  const fs::path out = c.out;
  PartialMarker mark(out, "infer");
  OdometryModel model(cfg.model);
  load_checkpoint(o.checkpoint, model.params());
  const bool validity = cfg.train.use_validity_weights;
  const Dataset data = load_dataset(o.data);

  json summary;
  if (!data.test.empty()) {
    const auto errs = evaluate_pairs(model, data.test, validity);
    std::string csv = "index,translation_error_m,rotation_error_rad\n";
    std::vector<double> et, er;
    for (std::size_t i = 0; i < errs.size(); ++i) {
      csv += std::to_string(i) + "," + fmt_double(errs[i].translation) + "," + fmt_double(errs[i].rotation) + "\n";
      et.push_back(errs[i].translation);
      er.push_back(errs[i].rotation);
    }
    write_text(out / "test_pairs.csv", csv);
    summary["test_pairs"] = {{"count", errs.size()},
                             {"median_translation_error_m", median(et)},
                             {"median_rotation_error_rad", median(er)}};
    log(LogLevel::kInfo, "held-out pairs: median error " + fmt_double(median(et)) + " m, " +
                             fmt_double(median(er)) + " rad");
  }
  json seqs = json::array();
  for (const auto& s : data.sequences) {
    std::vector<HeadOutputs> heads;
    heads.reserve(s.frames.size());
    for (const auto& f : s.frames) heads.push_back(model.heads(f, validity));
    std::vector<Pose2> rel;
    std::string rel_csv = "index,x,y,theta\n";
    for (std::size_t i = 1; i < heads.size(); ++i) {
      const auto fwd = model.forward_pair(heads[i - 1], heads[i], validity);
      if (i == 1) write_match_csv(out / (s.name + ".matches.csv"), fwd.matches);
      const Pose2 r = fwd.transform.value().inverse();
      rel.push_back(r);
      rel_csv += std::to_string(i) + "," + fmt_double(r.x()) + "," + fmt_double(r.y()) + "," +
                 fmt_double(r.theta()) + "\n";
    }
    const Pose2 start = pose2_of(s.gt.poses.front());
    std::vector<Pose2> poses{start};
    for (const auto& r : rel) poses.push_back(poses.back() * r);
    const auto est = Trajectory::from_pose2(poses, s.gt.timestamps);
    write_tum((out / (s.name + ".est.tum")).string(), est);
    write_tum((out / (s.name + ".gt.tum")).string(), s.gt);
    write_text(out / (s.name + ".rel.csv"), rel_csv);
    seqs.push_back({{"name", s.name}, {"frames", s.frames.size()}});
    log(LogLevel::kInfo, "sequence " + s.name + ": " + std::to_string(rel.size()) + " relative poses");
  }
  summary["sequences"] = seqs;
  write_text(out / "infer_summary.json", summary.dump(2) + "\n");
  mark.done();
}

// ---- eval -----------------------------------------------------------------

struct EvalOpts {
  Common common;
  std::string est, gt;
  std::vector<double> segments;
  std::optional<double> window;
  double max_dt = 0.02;
};

void cmd_eval(const EvalOpts& o) {
  if (o.est.empty() || o.gt.empty()) throw UsageError("--est and --gt are required");
  EvalConfig ec;
  if (!o.common.config.empty()) ec = resolve_config(o.common).eval;
  if (!o.segments.empty()) ec.segment_lengths = o.segments;
  if (o.window) ec.scale_window_m = *o.window;
  std::optional<PartialMarker> mark;
  if (!o.common.out.empty()) mark.emplace(o.common.out, "eval");
  Trajectory est = read_tum(o.est);
  Trajectory gt = read_tum(o.gt);
  if (est.timestamps != gt.timestamps) {
    auto [e, g] = associate(est, gt, o.max_dt);
    log(LogLevel::kInfo, "associated " + std::to_string(e.size()) + " of " + std::to_string(est.size()) +
                             " poses by timestamp");
    est = std::move(e);
    gt = std::move(g);
  }
  const auto report = evaluate(est, gt, ec.segment_lengths, ec.scale_window_m);
  for (const auto& w : report.warnings) log(LogLevel::kInfo, "warning: " + w);
  std::cout << report_table(report);
  if (mark) {
    write_text(fs::path(o.common.out) / "metrics.csv", report_csv(report));
    write_text(fs::path(o.common.out) / "metrics.txt", report_table(report));
    mark->done();
  }
}

// ---- gradcheck ------------------------------------------------------------

void cmd_gradcheck(const Common& c) {
  AuditConfig ac;
  if (c.seed) ac.seed = static_cast<unsigned>(*c.seed);
  if (!c.config.empty()) ac.composite_tau = resolve_config(c).model.matcher.tau;
  std::optional<PartialMarker> mark;
  if (!c.out.empty()) mark.emplace(c.out, "gradcheck");
  const auto r = run_gradcheck_audit(ac);
  for (const auto& e : r.entries) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-44s max rel err %.3e  (tol %.0e)  %s", e.name.c_str(), e.max_rel_error,
                  e.tolerance, e.passed ? "PASS" : "FAIL");
    std::cout << buf << "\n";
  }
  std::cout << (r.all_passed ? "all gradient checks passed" : "gradient check FAILED") << " in "
            << fmt_double(r.seconds) << " s\n";
  if (mark) {
    write_text(fs::path(c.out) / "gradcheck.csv", audit_csv(r));
    mark->done();
  }
  if (!r.all_passed) throw CheckFailed("one or more gradient checks exceeded tolerance");
}

// ---- plot -----------------------------------------------------------------

struct PlotOpts {
  Common common;
  std::string est, gt, matches;
  std::size_t grid_h = 32, grid_w = 32;
  double threshold = 0.1;
};

void cmd_plot(const PlotOpts& o) {
  if (o.common.out.empty()) throw UsageError("--out FILE.svg is required");
  std::string svg;
  if (!o.matches.empty()) {
    svg = match_svg(read_match_csv(o.matches), o.grid_h, o.grid_w, o.threshold);
  } else {
    if (o.est.empty() && o.gt.empty()) throw UsageError("give --est/--gt trajectories or --matches");
    std::vector<std::pair<std::string, Trajectory>> tracks;
    if (!o.gt.empty()) tracks.emplace_back("ground truth", read_tum(o.gt));
    if (!o.est.empty()) tracks.emplace_back("estimate", read_tum(o.est));
    svg = trajectory_svg(tracks);
  }
  const fs::path out = o.common.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, svg);
}

std::string json_escape(const std::string& s) { return json(s).dump(); }

void print_error(const std::string& command, const std::string& type, const std::string& message) {
  std::cerr << "bevodo-error: {\"command\": " << json_escape(command) << ", \"type\": " << json_escape(type)
            << ", \"message\": " << json_escape(message) << "}\n";
}

void add_common(CLI::App* sub, Common& c, bool out_required) {
  sub->add_option("--config", c.config, "run configuration (JSON)");
  sub->add_option("--seed", c.seed, "override the configuration seed");
  auto* out = sub->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"bevodo: BEV keypoint odometry on synthetic worlds"};
  app.require_subcommand(1);

  SynthOpts synth;
  auto* s_synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(s_synth, synth.common, true);
  s_synth->add_option("--train-pairs", synth.train_pairs);
  s_synth->add_option("--test-pairs", synth.test_pairs);
  s_synth->add_option("--sequences", synth.sequences);

  TrainOpts train;
  auto* s_train = app.add_subcommand("train", "train the odometry model");
  add_common(s_train, train.common, true);
  s_train->add_option("--data", train.data, "dataset directory")->required();
  s_train->add_option("--epochs", train.epochs);
  s_train->add_option("--batch-size", train.batch_size);
  s_train->add_option("--lr", train.learning_rate);
  s_train->add_option("--max-pairs", train.max_pairs, "use only the first N training pairs");
  s_train->add_flag("--no-validity", train.no_validity, "disable keypoint validity weights");

  InferOpts infer;
  auto* s_infer = app.add_subcommand("infer", "estimate relative poses and trajectories");
  add_common(s_infer, infer.common, true);
  s_infer->add_option("--checkpoint", infer.checkpoint)->required();
  s_infer->add_option("--data", infer.data, "dataset directory")->required();

  EvalOpts eval;
  auto* s_eval = app.add_subcommand("eval", "trajectory metrics for TUM files");
  add_common(s_eval, eval.common, false);
  s_eval->add_option("--est", eval.est)->required();
  s_eval->add_option("--gt", eval.gt)->required();
  s_eval->add_option("--segments", eval.segments, "segment lengths in meters")->delimiter(',');
  s_eval->add_option("--window", eval.window, "scale-drift window in meters");
  s_eval->add_option("--max-dt", eval.max_dt, "timestamp association tolerance in seconds");

  Common gradcheck;
  auto* s_grad = app.add_subcommand("gradcheck", "finite-difference audit of all differentiable ops");
  add_common(s_grad, gradcheck, false);

  PlotOpts plot;
  auto* s_plot = app.add_subcommand("plot", "SVG trajectory overlay or match visualization");
  add_common(s_plot, plot.common, true);
  s_plot->add_option("--est", plot.est);
  s_plot->add_option("--gt", plot.gt);
  s_plot->add_option("--matches", plot.matches, "match CSV written by infer");
  s_plot->add_option("--grid-h", plot.grid_h);
  s_plot->add_option("--grid-w", plot.grid_w);
  s_plot->add_option("--threshold", plot.threshold, "fraction of the best score below which matches are hidden");

  std::string command = argc > 1 ? argv[1] : "";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(command, "UsageError", e.what());
    return 2;
  }
  try {
    if (*s_synth) cmd_synth(synth);
    if (*s_train) cmd_train(train);
    if (*s_infer) cmd_infer(infer);
    if (*s_eval) cmd_eval(eval);
    if (*s_grad) cmd_gradcheck(gradcheck);
    if (*s_plot) cmd_plot(plot);
  } catch (const UsageError& e) {
    print_error(command, "UsageError", e.what());
    return 2;
  } catch (const ConfigError& e) {
    print_error(command, "ConfigError", e.what());
    return 1;
  } catch (const CheckFailed& e) {
    print_error(command, "CheckFailed", e.what());
    return 1;
  } catch (const NonFiniteLoss& e) {
    print_error(command, "NonFiniteLoss", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(command, "RuntimeError", e.what());
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"bevodo"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace bevodo
