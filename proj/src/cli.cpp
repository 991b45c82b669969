#include "ebv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ebv/capacity.hpp"
#include "ebv/classifier.hpp"
#include "ebv/error.hpp"
#include "ebv/frame.hpp"
#include "ebv/frame_io.hpp"
#include "ebv/generator.hpp"
#include "ebv/toy.hpp"

namespace ebv::cli {

namespace {

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

const char* boolean(bool b) { return b ? "true" : "false"; }

struct GenerateArgs {
  FrameConfig config;
  bool deterministic = false;
  bool quiet = false;
  std::string out;
};

struct StatsArgs {
  std::string in;
  std::optional<double> alpha;
  std::optional<double> tol;
  bool json = false;
};

struct BoundsArgs {
  std::size_t dim = 0;
  std::size_t num = 0;
  std::optional<double> alpha;
};

struct CapacityArgs {
  CapacityQuery query;
  std::uint64_t seed = 0;
  std::optional<double> tol;
  std::string table;
};

struct DemoArgs {
  std::size_t classes = 0;
  std::string frame;
  bool generate_frame = false;
  double tau = kDefaultTemperature;
  toy::TrainConfig train;
  bool baseline = false;
  std::optional<std::size_t> dim;
  double alpha = 0.01;
  std::size_t per_class = 200;
  double sigma = 0.5;
  std::size_t input_dim = 16;
  bool report_only = false;
  std::string table;
};

void print_stats(std::ostream& out, const FrameStats& s, const FrameMatrix& frame, double alpha,
                 double tol, bool json) {
  if (json) {
    nlohmann::ordered_json j;
    j["dim"] = frame.dim();
    j["num"] = frame.num();
    j["alpha"] = alpha;
    j["tol"] = tol;
    j["coherence"] = s.coherence;
    j["min_angle_deg"] = s.min_angle_deg;
    j["avg_deviation_deg"] = s.avg_deviation_deg;
    j["welch_bound"] = s.welch_bound;
    j["satisfies_alpha"] = s.satisfies_alpha;
    out << j.dump() << "\n";
    return;
  }
  out << "dim=" << frame.dim() << "\n"
      << "num=" << frame.num() << "\n"
      << "alpha=" << num(alpha) << "\n"
      << "tol=" << num(tol) << "\n"
      << "coherence=" << num(s.coherence) << "\n"
      << "min_angle_deg=" << num(s.min_angle_deg) << "\n"
      << "avg_deviation_deg=" << num(s.avg_deviation_deg) << "\n"
      << "welch_bound=" << num(s.welch_bound) << "\n"
      << "satisfies_alpha=" << boolean(s.satisfies_alpha) << "\n";
}

int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  set_deterministic(a.deterministic);
  ProgressSink progress;
  if (!a.quiet) {
    progress = [&err](std::size_t it, double loss, double coherence) {
      err << "iter=" << it << " loss=" << num(loss) << " coherence=" << num(coherence) << "\n";
    };
  }
  Generation gen;
  try {
    gen = generate(a.config, progress);
  } catch (const InfeasibleConfig& e) {
    err << "error: infeasible: " << e.what() << "\n";
    return kInfeasible;
  }
  io::save_frame(gen.frame, {a.config.alpha, a.config.seed}, a.out);

  const double tol = a.config.effective_tol();
  const FrameStats s = frame_stats(gen.frame, a.config.alpha, tol);
  out << "converged=" << boolean(gen.report.converged) << "\n"
      << "iterations=" << gen.report.iterations << "\n"
      << "coherence=" << num(s.coherence) << "\n"
      << "min_angle_deg=" << num(s.min_angle_deg) << "\n"
      << "avg_deviation_deg=" << num(s.avg_deviation_deg) << "\n"
      << "welch_bound=" << num(s.welch_bound) << "\n"
      << "tol=" << num(tol) << "\n"
      << "out=" << a.out << "\n"
      << "elapsed_seconds=" << num(gen.report.elapsed_seconds) << "\n";
  if (!gen.report.converged) {
    err << "warning: no convergence within " << gen.report.iterations
        << " iterations; best frame (coherence " << num(s.coherence) << ") written to " << a.out
        << "\n";
    return kNotConverged;
  }
  return kOk;
}

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  const io::LoadedFrame loaded = io::load_frame(a.in);
  const double alpha = a.alpha.value_or(loaded.meta.alpha);
  const double tol = a.tol.value_or(default_tolerance(alpha));
  print_stats(out, frame_stats(loaded.frame, alpha, tol), loaded.frame, alpha, tol, a.json);
  return kOk;
}

int cmd_bounds(const BoundsArgs& a, std::ostream& out) {
  if (a.dim == 0 || a.num < 2) throw InvalidConfig("bounds needs --dim >= 1 and --num >= 2");
  const double welch = welch_lower_bound(a.dim, a.num);
  out << "welch_lower_bound=" << num(welch) << "\n";
  if (a.alpha) {
    const auto upper = max_num_upper_bound(*a.alpha, a.dim);
    out << "max_num_upper_bound=" << (upper ? std::to_string(*upper) : "unbounded") << "\n"
        << "alpha_feasible=" << boolean(a.num <= a.dim || *a.alpha >= welch) << "\n";
  } else {
    out << "max_num_upper_bound=n/a\n";
  }
  out << "grassmannian_feasibility=" << boolean(grassmannian_feasibility(a.dim, a.num)) << "\n"
      << "sqrt2n_heuristic=" << sqrt2n_heuristic(a.num) << "\n";
  return kOk;
}

void write_probe_table(std::ostream& os, const CapacityResult& r) {
  os << "num\tsucceeded\tattempts\tbest_coherence\n";
  for (const ProbeRecord& p : r.probes) {
    os << p.num << '\t' << (p.succeeded ? 1 : 0) << '\t' << p.attempts << '\t'
       << (std::isnan(p.best_coherence) ? std::string("nan") : num(p.best_coherence)) << '\n';
  }
}

int cmd_capacity(CapacityArgs a, std::ostream& out, std::ostream& err) {
  a.query.probe_template.seed = a.seed;
  if (a.tol) a.query.probe_template.tol = *a.tol;
  const CapacityResult r = bisect_capacity(a.query);

  std::ostream* summary = &err;
  if (!a.table.empty()) {
    std::ofstream file(a.table, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError(a.table + ": cannot open for writing");
    write_probe_table(file, r);
    if (!file.flush()) throw IoError(a.table + ": write failed");
    summary = &out;
  } else {
    write_probe_table(out, r);
  }
  *summary << "max_num_found=" << r.max_num_found << "\n"
           << "analytic_upper="
           << (r.analytic_upper ? std::to_string(*r.analytic_upper) : "unbounded") << "\n"
           << "ceiling_limited=" << boolean(r.ceiling_limited) << "\n"
           << "total_seconds=" << num(r.total_seconds) << "\n";
  return kOk;
}

void write_epoch_rows(std::ostream& os, const char* arm, const toy::TrainRecord& rec) {
  for (const toy::EpochRecord& e : rec.epochs) {
    os << arm << '\t' << e.epoch << '\t' << num(e.train_loss) << '\t' << num(e.train_acc) << '\t'
       << num(e.test_acc) << '\n';
  }
}

int cmd_demo(const DemoArgs& a, std::ostream& out, std::ostream& err) {
  if (a.classes < 2) throw InvalidConfig("--classes must be at least 2");
  const std::size_t dim = a.dim.value_or(a.classes);
  auto print_params = [&](std::size_t ebv_dim) {
    const toy::ParameterReport params =
        toy::head_parameter_report(a.train.hidden, ebv_dim, a.classes);
    out << "feature_dim=" << params.feature_dim << "\n"
        << "ebv_dim=" << params.ebv_dim << "\n"
        << "num_classes=" << params.num_classes << "\n"
        << "ebv_head_params=" << params.ebv_params << "\n"
        << "fc_head_params=" << params.fc_params << "\n"
        << "param_reduction=" << num(params.reduction) << "\n";
  };
  if (a.report_only) {
    print_params(dim);
    return kOk;
  }
  if (a.frame.empty() == !a.generate_frame) {
    throw InvalidConfig("demo-train needs exactly one of --frame or --generate-frame");
  }

  FrameMatrix frame;
  if (a.generate_frame) {
    FrameConfig config;
    config.dim = dim;
    config.num = a.classes;
    config.alpha = a.alpha;
    config.seed = a.train.seed;
    Generation gen;
    try {
      gen = generate(config);
    } catch (const InfeasibleConfig& e) {
      err << "error: infeasible: " << e.what() << "\n";
      return kInfeasible;
    }
    if (!gen.report.converged) {
      err << "warning: frame did not converge (coherence " << num(gen.report.final_coherence)
          << ")\n";
    }
    frame = std::move(gen.frame);
  } else {
    frame = io::load_frame(a.frame).frame;
  }
  if (frame.num() < a.classes) {
    throw InvalidConfig("frame has " + std::to_string(frame.num()) + " rows, need " +
                        std::to_string(a.classes));
  }
  const ClassifierHead head(std::move(frame), a.tau, a.classes);
  const toy::SyntheticDataset data =
      toy::make_dataset(a.classes, a.per_class, a.input_dim, a.sigma, a.train.seed);

  const toy::EbvTraining ebv = toy::train_extractor(data, head, a.train);
  std::optional<toy::BaselineTraining> fc;
  if (a.baseline) fc = toy::train_fc_baseline(data, head.dim(), a.train);

  auto write_table = [&](std::ostream& os) {
    os << "arm\tepoch\ttrain_loss\ttrain_acc\ttest_acc\n";
    write_epoch_rows(os, "ebv", ebv.record);
    if (fc) write_epoch_rows(os, "fc", fc->record);
  };
  if (!a.table.empty()) {
    std::ofstream file(a.table, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError(a.table + ": cannot open for writing");
    write_table(file);
    if (!file.flush()) throw IoError(a.table + ": write failed");
  } else {
    write_table(out);
    out << "\n";
  }
  out << "ebv_test_acc=" << num(ebv.record.final_test_acc) << "\n"
      << "own_vector_closest_train="
      << num(toy::own_vector_closest_fraction(ebv.extractor, head, data, data.train)) << "\n";
  if (fc) {
    out << "fc_test_acc=" << num(fc->record.final_test_acc) << "\n"
        << "test_acc_delta=" << num(ebv.record.final_test_acc - fc->record.final_test_acc)
        << "\n";
  }
  print_params(head.dim());
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Equiangular basis vectors: generate, inspect, and train with fixed frames",
               "ebv"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Optimize a frame and write it to a file");
  generate_cmd->add_option("--dim", gen.config.dim, "Vector dimension d")->required();
  generate_cmd->add_option("--num", gen.config.num, "Number of vectors N")->required();
  generate_cmd->add_option("--alpha", gen.config.alpha, "Max |cosine| between vectors")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  generate_cmd->add_option("--lr", gen.config.learning_rate, "Learning rate (default min(0.1, 10/N))")
      ->check(CLI::PositiveNumber);
  generate_cmd->add_option("--slice", gen.config.slice, "Rows per gradient slice")
      ->check(CLI::PositiveNumber);
  generate_cmd->add_option("--max-iters", gen.config.max_iters, "Iteration cap")
      ->check(CLI::PositiveNumber);
  generate_cmd->add_option("--tol", gen.config.tol, "Slack on alpha at convergence")
      ->check(CLI::PositiveNumber);
  generate_cmd->add_option("--seed", gen.config.seed, "RNG seed");
  generate_cmd->add_option("--threads", gen.config.threads, "Worker threads (0 = all cores)");
  generate_cmd->add_flag("--deterministic", gen.deterministic, "Fixed reduction order");
  generate_cmd->add_flag("--quiet", gen.quiet, "No progress lines");
  generate_cmd->add_option("--out", gen.out, "Output frame file")->required();

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Report coherence and angle metrics of a frame");
  stats_cmd->add_option("--in", stats.in, "Frame file")->required();
  stats_cmd->add_option("--alpha", stats.alpha, "Threshold (default: the file's alpha)")
      ->check(CLI::Range(0.0, 1.0));
  stats_cmd->add_option("--tol", stats.tol, "Slack on alpha")->check(CLI::PositiveNumber);
  stats_cmd->add_flag("--json", stats.json, "Print one flat JSON object");

  BoundsArgs bounds;
  auto* bounds_cmd = app.add_subcommand("bounds", "Print analytic bounds for (d, N, alpha)");
  bounds_cmd->add_option("--dim", bounds.dim, "Vector dimension d")->required();
  bounds_cmd->add_option("--num", bounds.num, "Number of vectors N")->required();
  bounds_cmd->add_option("--alpha", bounds.alpha, "Max |cosine|")->check(CLI::Range(0.0, 1.0));

  CapacityArgs cap;
  auto* capacity_cmd = app.add_subcommand("capacity", "Bisect the largest N for (alpha, d)");
  capacity_cmd->add_option("--dim", cap.query.dim, "Vector dimension d")->required();
  capacity_cmd->add_option("--alpha", cap.query.alpha, "Max |cosine|")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  capacity_cmd->add_option("--budget", cap.query.attempt_budget, "Attempts per probe")
      ->check(CLI::PositiveNumber);
  capacity_cmd->add_option("--seed", cap.seed, "Base seed");
  capacity_cmd->add_option("--tol", cap.tol, "Slack on alpha")->check(CLI::PositiveNumber);
  capacity_cmd->add_option("--iters-per-num", cap.query.iters_per_num, "Probe passes per vector")
      ->check(CLI::PositiveNumber);
  capacity_cmd->add_option("--max-iters-cap", cap.query.max_iters_cap, "Probe pass cap")
      ->check(CLI::PositiveNumber);
  capacity_cmd->add_option("--ceiling", cap.query.search_ceiling, "Largest N to try");
  capacity_cmd->add_option("--out", cap.table, "Write the probe table here");

  DemoArgs demo;
  auto* demo_cmd = app.add_subcommand("demo-train", "Train a toy extractor against a fixed frame");
  demo_cmd->add_option("--classes", demo.classes, "Number of classes K")->required();
  auto* frame_opt = demo_cmd->add_option("--frame", demo.frame, "Frame file for the head");
  auto* gen_flag =
      demo_cmd->add_flag("--generate-frame", demo.generate_frame, "Generate the head frame");
  frame_opt->excludes(gen_flag);
  demo_cmd->add_option("--tau", demo.tau, "Softmax temperature")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--epochs", demo.train.epochs, "Training epochs");
  demo_cmd->add_option("--lr", demo.train.lr, "Learning rate")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--batch", demo.train.batch, "Batch size")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--seed", demo.train.seed, "Seed for data, weights and order");
  demo_cmd->add_option("--hidden", demo.train.hidden, "Extractor hidden width")
      ->check(CLI::PositiveNumber);
  demo_cmd->add_flag("--baseline", demo.baseline, "Also train a k-way linear head");
  demo_cmd->add_option("--dim", demo.dim, "Frame dimension when generating (default K)")
      ->check(CLI::PositiveNumber);
  demo_cmd->add_option("--alpha", demo.alpha, "Frame alpha when generating")
      ->check(CLI::Range(0.0, 1.0));
  demo_cmd->add_option("--per-class", demo.per_class, "Samples per class")
      ->check(CLI::PositiveNumber);
  demo_cmd->add_option("--sigma", demo.sigma, "Noise standard deviation")
      ->check(CLI::NonNegativeNumber);
  demo_cmd->add_option("--input-dim", demo.input_dim, "Input dimension")
      ->check(CLI::PositiveNumber);
  demo_cmd->add_flag("--report-only", demo.report_only, "Print the head parameter report only");
  demo_cmd->add_option("--table", demo.table, "Write the epoch table here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const CLI::App* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kUsage;
  }

  try {
    if (*generate_cmd) return cmd_generate(gen, out, err);
    if (*stats_cmd) return cmd_stats(stats, out);
    if (*bounds_cmd) return cmd_bounds(bounds, out);
    if (*capacity_cmd) return cmd_capacity(cap, out, err);
    if (*demo_cmd) return cmd_demo(demo, out, err);
  } catch (const InvalidConfig& e) {
    err << "error: invalid configuration: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: unsupported format: " << e.what() << "\n";
    return kDataError;
  } catch (const IntegrityError& e) {
    err << "error: integrity check failed: " << e.what() << "\n";
    return kDataError;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace ebv::cli
