#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r2p/model.hpp"
#include "r2p/pointcloud.hpp"

namespace r2p {

struct SamplePair {
  PointCloud input;         // n points, normalized union of views
  PointCloud ground_truth;  // m points, same frame
};

// On-disk container magic "R2PD": u32 sample count, then per sample the
// input and ground-truth clouds as u64 count + count*3 f64 coordinates.
struct Dataset {
  std::vector<SamplePair> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  static Dataset load(const std::string& path);
  void save(const std::string& path) const;
};

// Deterministic tail split; by convention a fifteenth of the data is held
// out (1500 -> 1400/100, 150 -> 140/10).
std::pair<Dataset, Dataset> split_dataset(const Dataset& all,
                                          std::size_t test_count = 0);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 2;
  double lr_initial = 2e-4;
  LossSpec loss;  // d1, d2, alpha
  std::uint64_t seed = 1;
  ModelConfig arch;  // n, m, widths
  std::size_t checkpoint_interval = 50;  // epochs; 0 disables periodic saves
  std::size_t emd_cap = kDefaultExactCap;
  std::size_t eval_interval = 0;  // 0: only at the end (when heldout given)
  std::string out_dir;            // empty: nothing written to disk

  void validate() const;  // epochs even, lr > 0, positive sizes
};

// Constant for the first half of training, then linear to exactly 0 at the
// final epoch.
double lr_at(const TrainConfig& cfg, std::size_t epoch);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct EvalRow {
  std::size_t sample_id = 0;
  double cd = 0.0;
  double emd = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_cd = 0.0;
  double mean_emd = 0.0;
  bool emd_approximate = false;  // true when clouds exceeded the exact cap
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::vector<std::pair<std::size_t, EvalReport>> evals;  // epoch -> metrics
};

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // One update over `params` at learning rate `lr`; parameters without a
  // populated gradient are left untouched.
  void step(const std::vector<Tensor*>& params, double lr);

  std::size_t steps() const { return t_; }
  void export_state(std::size_t& t, std::vector<std::vector<double>>& m,
                    std::vector<std::vector<double>>& v) const;
  void import_state(std::size_t t, std::vector<std::vector<double>> m,
                    std::vector<std::vector<double>> v);

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Everything beyond the model needed to continue a run from an epoch
// boundary: optimizer moments, step count, and the shuffle stream. Written
// beside periodic checkpoints (magic "R2PS").
struct TrainState {
  std::size_t next_epoch = 0;
  std::size_t adam_t = 0;
  std::vector<std::vector<double>> adam_m, adam_v;
  std::string rng_state;  // mt19937_64 text serialization

  void save(const std::string& path) const;
  static TrainState load(const std::string& path);
};

// Full optimization loop: shuffled minibatches, two-term weighted loss,
// Adam updates under the two-phase schedule, periodic checkpoints. A
// non-finite loss aborts with a diagnostic snapshot (when out_dir is set)
// and a NumericError. Passing a TrainState with next_epoch > 0 resumes an
// interrupted run; together with the matching model checkpoint this
// reproduces the uninterrupted run's loss curve exactly.
TrainReport train(R2PModel& model, const Dataset& train_set,
                  const TrainConfig& cfg, const Dataset* heldout = nullptr,
                  const TrainState* resume = nullptr);

// Eval-mode forward per sample; CD always exact, EMD exact up to emd_cap
// points and auction-approximate above.
EvalReport evaluate(R2PModel& model, const Dataset& dataset,
                    std::size_t emd_cap = kDefaultExactCap);

struct AblationRow {
  std::string variant;  // "l1".."l5"
  double cd = 0.0;
  double emd = 0.0;
};

// Trains one model per loss variant on an internal train/test split of
// `dataset`, all from the same seed, and reports held-out CD/EMD.
std::vector<AblationRow> ablate_losses(const Dataset& dataset,
                                       const TrainConfig& base);

// Per-seed ablations plus the element-wise median table.
struct AblationSweep {
  std::vector<std::vector<AblationRow>> per_seed;
  std::vector<AblationRow> median;
};
AblationSweep ablate_losses_sweep(const Dataset& dataset,
                                  const TrainConfig& base,
                                  const std::vector<std::uint64_t>& seeds);

// ---- CSV / key-value output ---------------------------------------------------

void write_train_csv(const std::string& path, const TrainReport& report);
void write_eval_csv(const std::string& path, const EvalReport& report);
void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& table);
void write_kv_file(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& kv);

}  // namespace r2p
