#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metalora/serialize.hpp"

using namespace metalora;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string format = "csv,json,plot";
  std::optional<int> trials;
  std::optional<int> d, k, T, n_retrain, n_finetune;
  std::optional<double> sigma_eps;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON experiment config; flags override its keys");
  cmd->add_option("--seed", o.seed, "master seed override");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--format", o.format, "comma list of csv,json,plot");
  cmd->add_option("--trials", o.trials, "trials override");
  cmd->add_option("-d,--dim", o.d, "dimension override");
  cmd->add_option("-k,--rank", o.k, "adapter rank override");
  cmd->add_option("-T,--tasks", o.T, "retraining task count override");
  cmd->add_option("--n-retrain", o.n_retrain, "retraining samples per task");
  cmd->add_option("--n-finetune", o.n_finetune, "fine-tuning samples");
  cmd->add_option("--sigma-eps", o.sigma_eps, "label noise std");
}

ExperimentConfig load_config(const CommonOpts& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = experiment_config_from_json(load_json_file(o.config_path));
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.trials) cfg.trials = *o.trials;
  if (o.d) cfg.d = *o.d;
  if (o.k) cfg.k = *o.k;
  if (o.T) cfg.T = *o.T;
  if (o.n_retrain) cfg.n_retrain = *o.n_retrain;
  if (o.n_finetune) cfg.n_finetune = *o.n_finetune;
  if (o.sigma_eps) cfg.sigma_eps = *o.sigma_eps;
  return cfg;
}

std::vector<std::string> split_formats(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_json_out(const CommonOpts& o, const std::string& name, const Json& j) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec) throw io_error("cannot create output directory " + o.out_dir + ": " + ec.message());
  write_text_file((fs::path(o.out_dir) / name).string(), j.dump(2) + "\n");
}

void print_report(const StationaryReport& rep) {
  std::printf("  %-22s %s\n", "classification", to_string(rep.classification));
  std::printf("  %-22s %.6e\n", "loss", rep.loss_value);
  std::printf("  %-22s %.6e\n", "grad norm", rep.grad_norm);
  if (std::isnan(rep.min_hessian_eig))
    std::printf("  %-22s %s\n", "min Hessian eig", "(not computed)");
  else
    std::printf("  %-22s %.6e\n", "min Hessian eig", rep.min_hessian_eig);
  std::printf("  %-22s", "||B_t||");
  for (double b : rep.b_norms) std::printf(" %.4e", b);
  std::printf("\n");
}

// Shared by train/finetune so the two stages agree on data and streams.
struct RetrainResult {
  TrialInstance inst;
  TrainTrace meta_trace;
  Matrix a_sr;
  MetaEmpiricalStats stats;
};

RetrainResult retrain(const ExperimentConfig& cfg) {
  RetrainResult r{make_trial_instance(cfg, 0, 0), {}, {}, {}};
  r.stats = MetaEmpiricalStats::from_datasets(r.inst.retrain);
  Rng init_gen(RngSpec{cfg.master_seed, derive_stream(r.inst.base_stream, 500)});
  const MetaParams init = random_init(cfg.d, cfg.k, cfg.T, cfg.train.init_scale, init_gen);
  r.meta_trace = train_meta_gd(init, empirical_objective(r.stats), cfg.train,
                               RngSpec{cfg.master_seed, derive_stream(r.inst.base_stream, 501)});
  r.a_sr = solve_sr_empirical(r.inst.retrain, 0.0);
  return r;
}

int cmd_gen(const CommonOpts& o, bool emit_data) {
  const ExperimentConfig cfg = load_config(o);
  const TrialInstance inst = make_trial_instance(cfg, 0, 0);
  Json j{{"config", to_json(cfg)}, {"ground_truth", to_json(inst.gt)}};
  if (emit_data) {
    Json data = Json::array();
    for (const TaskDataset& t : inst.retrain) data.push_back(to_json(t));
    j["retrain_data"] = std::move(data);
    j["test_data"] = to_json(inst.test);
  }
  write_json_out(o, "ground_truth.json", j);
  std::printf("wrote ground_truth.json (d=%d k=%d T=%d)\n", cfg.d, cfg.k, cfg.T);
  return 0;
}

int cmd_train(const CommonOpts& o) {
  const ExperimentConfig cfg = load_config(o);
  const RetrainResult r = retrain(cfg);
  double pooled = 0.0;
  for (const TaskStats& ts : r.stats.tasks) pooled += ts.loss(r.a_sr);
  Json j{{"config", to_json(cfg)},
         {"ground_truth", to_json(r.inst.gt)},
         {"params", to_json(r.meta_trace.final_params)},
         {"meta_trace", to_json(r.meta_trace)},
         {"a_sr", to_json(r.a_sr)},
         {"sr_pooled_loss", pooled}};
  write_json_out(o, "train.json", j);
  std::printf("meta retrain loss %.6e (converged=%s, %d iters); SR pooled loss %.6e\n",
              r.meta_trace.loss_history.back(), r.meta_trace.converged ? "yes" : "no",
              r.meta_trace.iterations_used, pooled);
  return 0;
}

int cmd_finetune(const CommonOpts& o) {
  const ExperimentConfig cfg = load_config(o);
  const RetrainResult r = retrain(cfg);
  const int rank = resolve_finetune_rank(cfg, cfg.T);
  const RngSpec ft_seed{cfg.master_seed, derive_stream(r.inst.base_stream, 502)};
  const auto [ad_meta, tr_meta] =
      finetune_empirical(r.meta_trace.final_params.a, r.inst.test, rank, cfg.train, ft_seed);
  const auto [ad_sr, tr_sr] = finetune_empirical(r.a_sr, r.inst.test, rank, cfg.train, ft_seed);
  const double loss_meta = test_loss_population(ad_meta, r.meta_trace.final_params.a, r.inst.gt);
  const double loss_sr = test_loss_population(ad_sr, r.a_sr, r.inst.gt);
  Json j{{"config", to_json(cfg)},
         {"rank", rank},
         {"meta_adapter", to_json(ad_meta)},
         {"sr_adapter", to_json(ad_sr)},
         {"meta_test_loss", loss_meta},
         {"sr_test_loss", loss_sr}};
  write_json_out(o, "finetune.json", j);
  std::printf("rank-%d fine-tune: Meta-LoRA test loss %.6e, SR test loss %.6e\n", rank,
              loss_meta, loss_sr);
  return 0;
}

int cmd_ablate(const CommonOpts& o) {
  const ExperimentConfig cfg = load_config(o);
  const auto rows = run_comparison(cfg);
  emit_outputs(rows, nullptr, o.out_dir, split_formats(o.format));
  std::printf("%zu rows -> %s\n", rows.size(), o.out_dir.c_str());
  return 0;
}

int cmd_verify(const CommonOpts& o) {
  const ExperimentConfig cfg = load_config(o);
  const VerifyReport rep = verify_theorems(VerifyRanges{}, cfg.master_seed);
  for (const CheckResult& c : rep.checks)
    std::printf("%-32s %s  measured=%.6e  %s\n", c.name.c_str(), c.passed ? "PASS" : "FAIL",
                c.measured, c.detail.c_str());
  emit_outputs({}, &rep, o.out_dir, split_formats(o.format));
  std::printf("%s\n", rep.all_passed() ? "all checks passed" : "CHECKS FAILED");
  return rep.all_passed() ? 0 : 1;
}

int cmd_probe(const CommonOpts& o) {
  const ExperimentConfig cfg = load_config(o);
  // no diversity requirement here: the spurious-minimum regime has k(T+1) > d
  const GroundTruth gt = sample_dense_truth(cfg.d, cfg.k, cfg.T, RngSpec{cfg.master_seed, 1});
  const auto found =
      probe_spurious_minimum(gt, cfg.train, RngSpec{cfg.master_seed, 2});
  Json j{{"config", to_json(cfg)}, {"ground_truth", to_json(gt)}, {"found", found.has_value()}};
  if (found) {
    Json u = Json::array();
    for (const Matrix& m : found->first) u.push_back(to_json(m));
    j["u_hat"] = std::move(u);
    j["params"] = to_json(lift_with_critical_a(found->first, gt));
    j["report"] = to_json(found->second);
    std::printf("candidate found after multi-start search:\n");
    print_report(found->second);
  } else {
    std::printf("no spurious-minimum candidate found (%d starts)\n", cfg.train.multistarts);
  }
  write_json_out(o, "probe.json", j);
  return 0;
}

int cmd_classify(const CommonOpts& o, const std::string& in_path, double grad_tol,
                 double eig_tol) {
  const Json j = load_json_file(in_path);
  if (!j.contains("ground_truth") || !j.contains("params"))
    throw config_error(in_path + ": need ground_truth and params keys");
  const GroundTruth gt = ground_truth_from_json(j["ground_truth"]);
  const MetaParams p = meta_params_from_json(j["params"]);
  const StationaryReport rep = classify_stationary_point(p, gt, grad_tol, eig_tol);
  print_report(rep);
  write_json_out(o, "classify.json", to_json(rep));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metalora: linear meta-learning retraining and fine-tuning toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool emit_data = false;
  std::string classify_in;
  double grad_tol = 1e-8, eig_tol = 1e-9;

  auto* gen = app.add_subcommand("gen", "generate a ground truth (and optionally datasets)");
  add_common(gen, opts);
  gen->add_flag("--emit-data", emit_data, "include sampled datasets in the output");
  auto* train = app.add_subcommand("train", "retrain with Meta-LoRA GD and closed-form SR");
  add_common(train, opts);
  auto* finetune = app.add_subcommand("finetune", "retrain, then fine-tune on the test task");
  add_common(finetune, opts);
  auto* ablate = app.add_subcommand("ablate", "run the comparison sweep and emit CSV/plots");
  add_common(ablate, opts);
  auto* verify = app.add_subcommand("verify", "run the theorem verification suites");
  add_common(verify, opts);
  auto* probe = app.add_subcommand("probe-spurious",
                                   "multi-start search for spurious reduced-loss minima");
  add_common(probe, opts);
  auto* classify = app.add_subcommand("classify", "classify a stationary point from JSON");
  add_common(classify, opts);
  classify->add_option("--in", classify_in, "JSON file with ground_truth and params")
      ->required();
  classify->add_option("--grad-tol", grad_tol, "stationarity tolerance");
  classify->add_option("--eig-tol", eig_tol, "negative-eigenvalue tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(opts, emit_data);
    if (train->parsed()) return cmd_train(opts);
    if (finetune->parsed()) return cmd_finetune(opts);
    if (ablate->parsed()) return cmd_ablate(opts);
    if (verify->parsed()) return cmd_verify(opts);
    if (probe->parsed()) return cmd_probe(opts);
    if (classify->parsed()) return cmd_classify(opts, classify_in, grad_tol, eig_tol);
  } catch (const io_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
