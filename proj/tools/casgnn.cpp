#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "casgnn/checkpoint.hpp"
#include "casgnn/config.hpp"
#include "casgnn/data.hpp"
#include "casgnn/errors.hpp"
#include "casgnn/gradcheck.hpp"
#include "casgnn/image_io.hpp"
#include "casgnn/metrics.hpp"
#include "casgnn/model.hpp"
#include "casgnn/train.hpp"

namespace {

using namespace casgnn;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitVerification = 5;

struct CommonOptions {
  std::string config_path;
  std::string profile = "desk";
  std::vector<std::string> sets;  // key=value overrides
};

KeyValueConfig build_config(const CommonOptions& common) {
  KeyValueConfig config =
      common.config_path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(common.config_path);
  if (common.profile == "paper") {
    apply_paper_profile(config);
  } else if (common.profile != "desk") {
    throw ConfigError("unknown profile '" + common.profile + "' (expected desk or paper)");
  }
  for (const std::string& kv : common.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config.override_value(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--config", common.config_path, "key=value configuration file");
  cmd->add_option("--profile", common.profile, "configuration profile: desk (default) or paper");
  cmd->add_option("--set", common.sets, "override one configuration key (key=value), repeatable");
}

int cmd_gen_data(const CommonOptions& common, const std::string& out_dir, int count,
                 std::uint32_t seed, int size, const std::string& regime) {
  KeyValueConfig config = build_config(common);
  GenConfig gen = gen_config_from(config);
  if (size > 0) gen.size = size;
  gen.seed = seed;
  gen.regime = parse_regime(regime);
  if (count < 1) throw ConfigError("--count must be positive");
  Dataset dataset = generate_dataset(gen, count);
  save_dataset(dataset, out_dir);
  std::cout << "wrote " << count << " samples to " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const CommonOptions& common, const std::string& data_dir,
              const std::string& out_path, const std::string& loss_log_path) {
  KeyValueConfig config = build_config(common);
  Dataset dataset = load_dataset(data_dir);
  if (dataset.samples.empty()) throw UsageError("dataset " + data_dir + " is empty");

  TrainConfig train_config = train_config_from(config);
  if (!config.is_overridden("data.size")) {
    train_config.model.input_h = dataset.samples.front().rgb.shape().h;
    train_config.model.input_w = dataset.samples.front().rgb.shape().w;
  }

  TrainResult result = train(dataset, train_config);
  save_checkpoint(out_path, result.model, &result.adam, result.steps_run);

  std::string log_path = loss_log_path;
  if (log_path.empty()) {
    const std::filesystem::path parent = std::filesystem::path(out_path).parent_path();
    log_path = (parent.empty() ? std::filesystem::path(".") : parent) / "loss.csv";
  }
  write_loss_log(result.log, log_path);
  std::cout << "trained " << result.steps_run << " steps, final loss "
            << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& out_dir, bool oracle_gt) {
  Dataset dataset = load_dataset(data_dir);
  metrics::MetricsReport report;
  if (oracle_gt) {
    report = evaluate_oracle(dataset);
  } else {
    if (ckpt_path.empty()) throw UsageError("--ckpt is required unless --oracle-gt is given");
    Checkpoint ckpt = read_checkpoint(ckpt_path);
    Model<float> model = restore_model(ckpt);
    report = evaluate_model(model, dataset);
  }
  metrics::write_report(report, out_dir);
  std::printf("MEAN mae=%.6f f_beta=%.6f s_alpha=%.6f e_xi=%.6f over %zu samples\n",
              report.aggregate.mae, report.aggregate.f_beta, report.aggregate.s_alpha,
              report.aggregate.e_xi, report.rows.size());
  return kExitOk;
}

int cmd_infer(const std::string& ckpt_path, const std::string& rgb_path,
              const std::string& depth_path, const std::string& out_path) {
  Checkpoint ckpt = read_checkpoint(ckpt_path);
  Model<float> model = restore_model(ckpt);
  TensorF rgb = read_ppm(rgb_path);
  TensorF depth = read_pgm(depth_path);
  if (rgb.shape().h != depth.shape().h || rgb.shape().w != depth.shape().w) {
    throw DimensionError("rgb " + rgb.shape().str() + " and depth " + depth.shape().str() +
                         " sizes do not match");
  }
  TensorF prob = model.forward(rgb, depth);
  write_pgm(out_path, prob);
  return kExitOk;
}

int cmd_gradcheck(const std::string& scope, const std::string& fault_target) {
  GradCheckOptions opts;
  opts.eps = 1e-5;
  opts.fault_target = fault_target;

  std::vector<GradCheckReport> reports;
  if (scope == "ops") {
    opts.tolerance = 1e-6;
    opts.coords_per_tensor = 100;
    reports = run_ops_gradcheck<double>(opts);
  } else if (scope == "gr") {
    opts.tolerance = 1e-5;
    opts.coords_per_tensor = 8;
    reports = run_gr_gradcheck<double>(opts);
  } else if (scope == "cascade") {
    // Smaller eps keeps relu-kink smearing out of the finite differences on
    // the full micro-model; double precision leaves ample headroom.
    opts.eps = 1e-6;
    opts.tolerance = 1e-4;
    opts.coords_per_tensor = 4;
    reports = run_cascade_gradcheck<double>(opts);
  } else {
    throw ConfigError("unknown scope '" + scope + "' (expected ops, gr or cascade)");
  }

  bool all_pass = true;
  for (const GradCheckReport& r : reports) {
    std::printf("%-40s max_rel_err %.3e  %s\n", r.name.c_str(), r.max_rel_err,
                r.pass ? "pass" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("gradcheck %s: %zu checks, %s (tolerance %.1e)\n", scope.c_str(), reports.size(),
              all_pass ? "all passed" : "FAILURES", opts.tolerance);
  if (!all_pass) {
    std::cerr << "gradcheck failures in scope " << scope << "\n";
    return kExitVerification;
  }
  return kExitOk;
}

struct AblationTask {
  Mode mode = Mode::cgr;
  int n = 3;
  int t = 3;
  std::uint32_t seed = 0;
};

struct AblationOutcome {
  bool ok = false;
  double f_beta = 0;
  double mae = 0;
  std::string error;
};

int cmd_ablate(const CommonOptions& common, const std::string& data_dir,
               const std::string& eval_dir, const std::string& out_dir, int seeds, int jobs) {
  if (seeds < 1) throw ConfigError("--seeds must be positive");
  if (jobs < 1) throw ConfigError("--jobs must be positive");
  KeyValueConfig config = build_config(common);
  Dataset train_set = load_dataset(data_dir);
  Dataset eval_set = eval_dir.empty() ? train_set : load_dataset(eval_dir);
  TrainConfig base = train_config_from(config);
  if (!config.is_overridden("data.size") && !train_set.samples.empty()) {
    base.model.input_h = train_set.samples.front().rgb.shape().h;
    base.model.input_w = train_set.samples.front().rgb.shape().w;
  }
  const std::uint32_t seed0 = base.model.seed;

  // Base arms share the configured (n, t); the sweep varies them for cgr.
  const int cfg_n = base.model.scales_per_modality;
  const int cfg_t = base.model.iterations;
  struct Row {
    std::string arm;
    AblationTask task;
  };
  std::vector<Row> rows;
  for (Mode mode : {Mode::fusion, Mode::hr, Mode::cgr}) {
    for (int k = 0; k < seeds; ++k) {
      rows.push_back({mode_name(mode), {mode, cfg_n, cfg_t, seed0 + static_cast<std::uint32_t>(k)}});
    }
  }
  const std::pair<int, int> sweep[] = {{1, 3}, {3, 3}, {5, 3}, {3, 1}, {3, 5}};
  for (const auto& [n, t] : sweep) {
    for (int k = 0; k < seeds; ++k) {
      rows.push_back({"cgr", {Mode::cgr, n, t, seed0 + static_cast<std::uint32_t>(k)}});
    }
  }

  // Deterministic runs make identical tasks interchangeable, so (mode,n,t,seed)
  // duplicates train once.
  std::vector<AblationTask> tasks;
  std::vector<std::size_t> row_task(rows.size());
  const auto task_key = [](const AblationTask& t) {
    return std::to_string(static_cast<int>(t.mode)) + ":" + std::to_string(t.n) + ":" +
           std::to_string(t.t) + ":" + std::to_string(t.seed);
  };
  {
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string key = task_key(rows[i].task);
      const auto it = std::find(keys.begin(), keys.end(), key);
      if (it == keys.end()) {
        keys.push_back(key);
        tasks.push_back(rows[i].task);
        row_task[i] = tasks.size() - 1;
      } else {
        row_task[i] = static_cast<std::size_t>(it - keys.begin());
      }
    }
  }

  std::vector<AblationOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const AblationTask& task = tasks[i];
      try {
        TrainConfig cfg = base;
        cfg.model.mode = task.mode;
        cfg.model.scales_per_modality = task.n;
        cfg.model.iterations = task.t;
        cfg.model.seed = task.seed;
        TrainResult result = train(train_set, cfg);
        metrics::MetricsReport report = evaluate_model(result.model, eval_set);
        outcomes[i].ok = true;
        outcomes[i].f_beta = report.aggregate.f_beta;
        outcomes[i].mae = report.aggregate.mae;
        std::lock_guard lock(log_mutex);
        std::printf("arm %s n=%d t=%d seed=%u: f_beta=%.4f mae=%.4f (%llu steps)\n",
                    mode_name(task.mode), task.n, task.t, task.seed, outcomes[i].f_beta,
                    outcomes[i].mae, static_cast<unsigned long long>(result.steps_run));
        std::fflush(stdout);
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
        std::lock_guard lock(log_mutex);
        std::cerr << "arm " << mode_name(task.mode) << " n=" << task.n << " t=" << task.t
                  << " seed=" << task.seed << " failed: " << e.what() << "\n";
      }
    }
  };
  {
    std::vector<std::thread> pool;
    const int thread_count = std::min<int>(jobs, static_cast<int>(tasks.size()));
    pool.reserve(thread_count);
    for (int i = 0; i < thread_count; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::filesystem::create_directories(out_dir);
  const std::string csv_path = out_dir + "/ablation.csv";
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path);
  out << "arm,n,t,seed,f_beta,mae\n";
  char line[160];
  bool any_failed = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const AblationOutcome& o = outcomes[row_task[i]];
    if (!o.ok) {
      any_failed = true;
      continue;
    }
    std::snprintf(line, sizeof(line), "%s,%d,%d,%u,%.6f,%.6f\n", rows[i].arm.c_str(),
                  rows[i].task.n, rows[i].task.t, rows[i].task.seed, o.f_beta, o.mae);
    out << line;
  }
  if (!out) throw IoError("write failed for " + csv_path);
  std::cout << "wrote " << csv_path << "\n";
  return any_failed ? kExitNumeric : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascade graph reasoning for RGB-D salient object detection"};
  app.require_subcommand(1);

  CommonOptions gen_common, train_common, ablate_common;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic RGB-D dataset");
  std::string gen_out, gen_regime = "both";
  int gen_count = 0, gen_size = 0;
  std::uint32_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of samples")->required();
  gen->add_option("--seed", gen_seed, "base seed (sample i uses seed+i)");
  gen->add_option("--size", gen_size, "square image size (default from config)");
  gen->add_option("--regime", gen_regime, "contrast regime: color, depth or both");
  add_common(gen, gen_common);

  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  std::string train_data, train_out, train_mode, train_loss_log;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
  train_cmd->add_option("--mode", train_mode, "fusion, hr or cgr (overrides config)");
  train_cmd->add_option("--loss-log", train_loss_log, "loss CSV path (default: loss.csv beside the checkpoint)");
  add_common(train_cmd, train_common);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_out;
  bool eval_oracle = false;
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path");
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval_out, "report output directory")->required();
  eval_cmd->add_flag("--oracle-gt", eval_oracle,
                     "score the ground truth against itself (metric pipeline check)");

  auto* infer_cmd = app.add_subcommand("infer", "predict a saliency map for one RGB-D pair");
  std::string infer_ckpt, infer_rgb, infer_depth, infer_out;
  infer_cmd->add_option("--ckpt", infer_ckpt, "checkpoint path")->required();
  infer_cmd->add_option("--rgb", infer_rgb, "input PPM")->required();
  infer_cmd->add_option("--depth", infer_depth, "input PGM")->required();
  infer_cmd->add_option("--out", infer_out, "output PGM")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string grad_scope = "ops", grad_fault;
  grad_cmd->add_option("--scope", grad_scope, "ops, gr or cascade");
  grad_cmd->add_option("--inject-fault", grad_fault,
                       "testing hook: corrupt analytic gradients whose name starts with this");

  auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation grid");
  std::string ablate_data, ablate_eval, ablate_out;
  int ablate_seeds = 3, ablate_jobs = 1;
  ablate_cmd->add_option("--data", ablate_data, "training dataset directory")->required();
  ablate_cmd->add_option("--eval-data", ablate_eval, "held-out eval dataset (default: --data)");
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
  ablate_cmd->add_option("--seeds", ablate_seeds, "seeds per arm");
  ablate_cmd->add_option("--jobs", ablate_jobs, "parallel training workers");
  add_common(ablate_cmd, ablate_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gen_common, gen_out, gen_count, gen_seed, gen_size, gen_regime);
    }
    if (train_cmd->parsed()) {
      if (!train_mode.empty()) train_common.sets.push_back("model.mode=" + train_mode);
      return cmd_train(train_common, train_data, train_out, train_loss_log);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_oracle);
    if (infer_cmd->parsed()) return cmd_infer(infer_ckpt, infer_rgb, infer_depth, infer_out);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_scope, grad_fault);
    if (ablate_cmd->parsed()) {
      return cmd_ablate(ablate_common, ablate_data, ablate_eval, ablate_out, ablate_seeds,
                        ablate_jobs);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const VerificationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
