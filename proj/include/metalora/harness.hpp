#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metalora/landscape.hpp"
#include "metalora/solvers.hpp"

namespace metalora {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RankPolicy { PaperDefault, Fixed };

enum class Method { MetaLoRA, SRLoRA };
const char* to_string(Method m);

struct SweepSpec {
  std::string axis;  // one of "d", "N", "Nprime", "T"
  std::vector<double> values;
};

// Experiment runs train on empirical objectives, where chasing the population
// default 1e-9 gradient tolerance is pointless; 1e-6 sits safely below the
// curvature scale of every sweep point.
inline TrainConfig default_experiment_train() {
  TrainConfig c;
  c.max_iters = 30000;
  c.grad_tol = 1e-6;
  return c;
}

struct ExperimentConfig {
  int d = 10;
  int k = 1;
  int T = 3;
  int n_retrain = 5000;
  int n_finetune = 100;
  double sigma_eps = 0.1;
  double sigma_x = 1.0;
  RankPolicy rank_policy = RankPolicy::PaperDefault;
  int fixed_rank = 1;  // only read when rank_policy == Fixed
  int trials = 10;
  std::optional<SweepSpec> sweep;
  TrainConfig train = default_experiment_train();
  std::uint64_t master_seed = 1;
};

// PaperDefault resolves to 3k when the (possibly swept) T equals 2, else k.
int resolve_finetune_rank(const ExperimentConfig& cfg, int t_value);

struct AblationRow {
  std::string sweep_axis = "none";
  double sweep_value = 0.0;
  Method method = Method::MetaLoRA;
  int trial_index = 0;
  double retrain_loss = 0.0;
  double population_test_loss = 0.0;
  std::uint64_t seed_used = 0;
  bool converged = true;
};

// One ground truth + datasets shared by both methods within a trial. All
// stream ids are derived from (sweep_index, trial), so a rerun with the same
// master seed regenerates identical data.
struct TrialInstance {
  GroundTruth gt;
  std::vector<TaskDataset> retrain;
  TaskDataset test;
  std::uint64_t base_stream = 0;
};

TrialInstance make_trial_instance(const ExperimentConfig& cfg, int sweep_index, int trial);

// Trains Meta-LoRA (GD on the empirical objective) and SR (closed form) on
// identical data, fine-tunes both on the same test samples, and reports the
// population test loss. Solver failures become rows with converged=false and
// NaN losses; the sweep itself never aborts.
std::vector<AblationRow> run_comparison(const ExperimentConfig& cfg);

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
};

struct VerifyRanges {
  std::vector<int> ds{6, 8, 10};
  std::vector<int> ks{1, 2};
  std::vector<int> ts{1, 2, 3, 4};
  int seeds = 3;
};

VerifyReport verify_theorems(const VerifyRanges& ranges, std::uint64_t master_seed);

// Writes ablation.csv, report.json, and plot_<axis>.svg files as requested by
// formats ("csv", "json", "plot"). report may be null.
void emit_outputs(const std::vector<AblationRow>& rows, const VerifyReport* report,
                  const std::string& out_dir, const std::vector<std::string>& formats);

// Count of singular values above rel_tol times the largest.
int numerical_rank(const Matrix& m, double rel_tol = 1e-8);

double median(std::vector<double> v);
double quantile(std::vector<double> v, double q);

// Exact T=2 critical points with positive loss, k arbitrary. Draws its own
// ground truth from the seed. zero_family puts every factor at 0; otherwise
// the factors are collinear with the top eigenvector of U2*U2*' - U1*U1*'.
std::pair<MetaParams, GroundTruth> manufacture_t2_saddle(int d, int k, std::uint64_t seed,
                                                         bool zero_family);

// Points where plain GD stalls at positive loss: started on a GD-invariant
// set (U = 0, or all factors collinear with a shared eigenvector) and run
// until progress dies. seed % 3 picks the variant.
std::pair<MetaParams, GroundTruth> gd_stalled_t2(int d, int k, std::uint64_t seed);

}  // namespace metalora
