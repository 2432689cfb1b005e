#include "r2p/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "r2p/error.hpp"
#include "r2p/rng.hpp"

namespace r2p {

namespace {

constexpr char kDatasetMagic[4] = {'R', '2', 'P', 'D'};

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated dataset");
  return v;
}

void write_points(std::ostream& os, const PointCloud& pc) {
  write_raw<std::uint64_t>(os, pc.size());
  for (const Vec3& p : pc.points) {
    write_raw<double>(os, p.x);
    write_raw<double>(os, p.y);
    write_raw<double>(os, p.z);
  }
}

PointCloud read_points(std::istream& is, CloudSource src) {
  PointCloud pc;
  pc.source = src;
  std::uint64_t n = read_raw<std::uint64_t>(is);
  pc.points.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    double x = read_raw<double>(is);
    double y = read_raw<double>(is);
    double z = read_raw<double>(is);
    pc.points.push_back({x, y, z});
  }
  return pc;
}

}  // namespace

Dataset Dataset::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw IoError("bad dataset magic (expected R2PD): " + path);
  std::uint32_t count = read_raw<std::uint32_t>(is);
  Dataset ds;
  ds.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SamplePair s;
    s.input = read_points(is, CloudSource::union_input);
    s.ground_truth = read_points(is, CloudSource::ground_truth);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void Dataset::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(kDatasetMagic, 4);
  write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(samples.size()));
  for (const SamplePair& s : samples) {
    write_points(os, s.input);
    write_points(os, s.ground_truth);
  }
  if (!os) throw IoError("failed writing dataset: " + path);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& all,
                                          std::size_t test_count) {
  if (all.empty()) throw UsageError("split_dataset: dataset is empty");
  if (test_count == 0) test_count = std::max<std::size_t>(1, all.size() / 15);
  if (test_count >= all.size())
    throw UsageError("split_dataset: test share covers the whole dataset");
  Dataset train, test;
  std::size_t cut = all.size() - test_count;
  train.samples.assign(all.samples.begin(), all.samples.begin() + cut);
  test.samples.assign(all.samples.begin() + cut, all.samples.end());
  return {std::move(train), std::move(test)};
}

void TrainConfig::validate() const {
  if (epochs % 2 != 0)
    throw UsageError("train config: epochs must be even (two-phase schedule)");
  if (!(lr_initial > 0.0))
    throw UsageError("train config: lr_initial must be positive");
  if (batch_size == 0) throw UsageError("train config: batch_size must be positive");
  arch.validate();
}

double lr_at(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.epochs)
    throw UsageError("lr_at: epoch " + std::to_string(epoch) +
                     " out of range [0," + std::to_string(cfg.epochs) + ")");
  std::size_t half = cfg.epochs / 2;
  if (epoch < half) return cfg.lr_initial;
  double step = static_cast<double>(epoch - half + 1);
  return cfg.lr_initial * (1.0 - step / static_cast<double>(half));
}

// ---- Adam ---------------------------------------------------------------------

Adam::Adam(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::export_state(std::size_t& t, std::vector<std::vector<double>>& m,
                        std::vector<std::vector<double>>& v) const {
  t = t_;
  m = m_;
  v = v_;
}

void Adam::import_state(std::size_t t, std::vector<std::vector<double>> m,
                        std::vector<std::vector<double>> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void Adam::step(const std::vector<Tensor*>& params, double lr) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->size(), 0.0);
      v_[i].assign(params[i]->size(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw UsageError("Adam: parameter list changed between steps");

  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.has_grad()) continue;
    std::span<const double> g = p.grad();
    std::span<double> w = p.mutable_data();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// ---- training state ---------------------------------------------------------

namespace {
constexpr char kStateMagic[4] = {'R', '2', 'P', 'S'};
}

void TrainState::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(kStateMagic, 4);
  write_raw<std::uint64_t>(os, next_epoch);
  write_raw<std::uint64_t>(os, adam_t);
  write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(adam_m.size()));
  for (std::size_t i = 0; i < adam_m.size(); ++i) {
    write_raw<std::uint64_t>(os, adam_m[i].size());
    os.write(reinterpret_cast<const char*>(adam_m[i].data()),
             static_cast<std::streamsize>(adam_m[i].size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(adam_v[i].data()),
             static_cast<std::streamsize>(adam_v[i].size() * sizeof(double)));
  }
  write_raw<std::uint64_t>(os, rng_state.size());
  os.write(rng_state.data(), static_cast<std::streamsize>(rng_state.size()));
  if (!os) throw IoError("failed writing training state: " + path);
}

TrainState TrainState::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kStateMagic, 4) != 0)
    throw IoError("bad training-state magic (expected R2PS): " + path);
  TrainState st;
  st.next_epoch = read_raw<std::uint64_t>(is);
  st.adam_t = read_raw<std::uint64_t>(is);
  std::uint32_t count = read_raw<std::uint32_t>(is);
  st.adam_m.resize(count);
  st.adam_v.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint64_t n = read_raw<std::uint64_t>(is);
    st.adam_m[i].resize(n);
    st.adam_v[i].resize(n);
    is.read(reinterpret_cast<char*>(st.adam_m[i].data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    is.read(reinterpret_cast<char*>(st.adam_v[i].data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  }
  std::uint64_t rlen = read_raw<std::uint64_t>(is);
  st.rng_state.resize(rlen);
  is.read(st.rng_state.data(), static_cast<std::streamsize>(rlen));
  if (!is) throw IoError("truncated training state: " + path);
  return st;
}

// ---- training loop --------------------------------------------------------------

namespace {

void check_dataset_dims(const Dataset& ds, const ModelConfig& arch,
                        const char* what) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const SamplePair& s = ds.samples[i];
    if (s.input.size() != arch.n || s.ground_truth.size() != arch.m)
      throw UsageError(std::string(what) + ": sample " + std::to_string(i) +
                       " has " + std::to_string(s.input.size()) + "/" +
                       std::to_string(s.ground_truth.size()) +
                       " points, model expects " + std::to_string(arch.n) +
                       "/" + std::to_string(arch.m));
  }
}

void write_abort_snapshot(const TrainConfig& cfg, std::size_t epoch,
                          std::size_t step, double lr,
                          const std::vector<std::size_t>& batch_ids,
                          const std::vector<PointCloud>& inputs,
                          const std::string& why) {
  if (cfg.out_dir.empty()) return;
  std::filesystem::create_directories(cfg.out_dir);
  std::string base = cfg.out_dir + "/abort_snapshot";
  std::ofstream os(base + ".txt");
  os << "reason=" << why << "\n"
     << "epoch=" << epoch << "\nstep=" << step << "\nlr=" << lr << "\n";
  os << "samples=";
  for (std::size_t i = 0; i < batch_ids.size(); ++i)
    os << (i ? "," : "") << batch_ids[i];
  os << "\n";
  for (std::size_t i = 0; i < inputs.size(); ++i)
    write_cloud(base + "_input" + std::to_string(i) + ".xyz", inputs[i],
                CloudFormat::xyz);
}

}  // namespace

TrainReport train(R2PModel& model, const Dataset& train_set,
                  const TrainConfig& cfg, const Dataset* heldout,
                  const TrainState* resume) {
  cfg.validate();
  if (train_set.empty()) throw UsageError("train: dataset is empty");
  check_dataset_dims(train_set, model.config(), "train");
  if (heldout) check_dataset_dims(*heldout, model.config(), "train (heldout)");
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  TrainReport report;
  if (cfg.epochs == 0) return report;

  Adam optimizer;
  auto params = model.parameters();
  auto rng = make_rng(cfg.seed);
  std::size_t start_epoch = 0;
  if (resume && resume->next_epoch > 0) {
    if (resume->next_epoch >= cfg.epochs)
      throw UsageError("train: resume epoch is past the configured run");
    start_epoch = resume->next_epoch;
    optimizer.import_state(resume->adam_t, resume->adam_m, resume->adam_v);
    std::istringstream ss(resume->rng_state);
    ss >> rng;
    if (!ss) throw IoError("train: corrupt rng state in resume data");
  }
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t global_step = 0;

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = lr_at(cfg, epoch);
    // Fresh iota before every shuffle: the epoch order is then a pure
    // function of the rng state, which resume restores.
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> ids(order.begin() + start, order.begin() + stop);
      std::vector<PointCloud> inputs, targets;
      for (std::size_t id : ids) {
        inputs.push_back(train_set.samples[id].input);
        targets.push_back(train_set.samples[id].ground_truth);
      }
      Tensor batch = clouds_to_tensor(inputs);
      try {
        auto [p_m, p_o] = model.forward(batch, /*training=*/true);
        Tensor loss = r2p_loss(p_m, p_o, targets, cfg.loss, cfg.emd_cap);
        loss_sum += loss.value();
        loss.backward();
        optimizer.step(params, lr);
      } catch (const NumericError& e) {
        write_abort_snapshot(cfg, epoch, global_step, lr, ids, inputs, e.what());
        throw NumericError("training aborted at epoch " +
                           std::to_string(epoch) + ", step " +
                           std::to_string(global_step) + ", lr " +
                           std::to_string(lr) + ": " + e.what());
      }
      for (Tensor* p : params) p->zero_grad();
      ++batches;
      ++global_step;
    }

    auto t1 = std::chrono::steady_clock::now();
    EpochStats es;
    es.epoch = epoch;
    es.mean_loss = loss_sum / static_cast<double>(batches);
    es.lr = lr;
    es.seconds = std::chrono::duration<double>(t1 - t0).count();
    report.epochs.push_back(es);

    bool last = epoch + 1 == cfg.epochs;
    if (!cfg.out_dir.empty() && cfg.checkpoint_interval > 0 &&
        ((epoch + 1) % cfg.checkpoint_interval == 0) && !last) {
      std::string tag = std::to_string(epoch + 1);
      save_model(cfg.out_dir + "/model_epoch" + tag + ".r2pm", model);
      TrainState st;
      st.next_epoch = epoch + 1;
      optimizer.export_state(st.adam_t, st.adam_m, st.adam_v);
      std::ostringstream ss;
      ss << rng;
      st.rng_state = ss.str();
      st.save(cfg.out_dir + "/train_state_epoch" + tag + ".r2ps");
    }
    if (heldout && cfg.eval_interval > 0 &&
        ((epoch + 1) % cfg.eval_interval == 0) && !last)
      report.evals.emplace_back(epoch, evaluate(model, *heldout, cfg.emd_cap));
  }

  if (heldout)
    report.evals.emplace_back(cfg.epochs - 1,
                              evaluate(model, *heldout, cfg.emd_cap));
  if (!cfg.out_dir.empty()) save_model(cfg.out_dir + "/model.r2pm", model);
  return report;
}

EvalReport evaluate(R2PModel& model, const Dataset& dataset,
                    std::size_t emd_cap) {
  if (dataset.empty()) throw UsageError("evaluate: dataset is empty");
  check_dataset_dims(dataset, model.config(), "evaluate");

  EvalReport report;
  report.emd_approximate = model.config().m > emd_cap;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const SamplePair& s = dataset.samples[i];
    Tensor input = clouds_to_tensor({s.input});
    auto [p_m, p_o] = model.forward(input, /*training=*/false);
    PointCloud out = tensor_row_to_cloud(p_o, 0, CloudSource::output);
    EvalRow row;
    row.sample_id = i;
    row.cd = chamfer(out, s.ground_truth);
    row.emd = report.emd_approximate
                  ? emd_approx(out, s.ground_truth).cost
                  : emd_exact(out, s.ground_truth, emd_cap).cost;
    report.mean_cd += row.cd;
    report.mean_emd += row.emd;
    report.rows.push_back(row);
  }
  report.mean_cd /= static_cast<double>(report.rows.size());
  report.mean_emd /= static_cast<double>(report.rows.size());
  return report;
}

std::vector<AblationRow> ablate_losses(const Dataset& dataset,
                                       const TrainConfig& base) {
  auto [train_set, test_set] = split_dataset(dataset);
  std::vector<AblationRow> table;
  for (const char* variant : {"l1", "l2", "l3", "l4", "l5"}) {
    TrainConfig cfg = base;
    cfg.loss = LossSpec::variant(variant, base.loss.alpha);
    if (!base.out_dir.empty()) cfg.out_dir = base.out_dir + "/" + variant;
    R2PModel model(cfg.arch, cfg.seed);
    model.loss_spec() = cfg.loss;
    train(model, train_set, cfg);
    EvalReport ev = evaluate(model, test_set, cfg.emd_cap);
    table.push_back({variant, ev.mean_cd, ev.mean_emd});
  }
  return table;
}

AblationSweep ablate_losses_sweep(const Dataset& dataset,
                                  const TrainConfig& base,
                                  const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw UsageError("ablate: need at least one seed");
  AblationSweep sweep;
  for (std::uint64_t seed : seeds) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    if (!base.out_dir.empty())
      cfg.out_dir = base.out_dir + "/seed" + std::to_string(seed);
    sweep.per_seed.push_back(ablate_losses(dataset, cfg));
  }
  auto median_of = [&](auto getter, std::size_t row) {
    std::vector<double> vals;
    for (const auto& table : sweep.per_seed) vals.push_back(getter(table[row]));
    std::sort(vals.begin(), vals.end());
    return vals[vals.size() / 2];
  };
  for (std::size_t row = 0; row < 5; ++row) {
    AblationRow r;
    r.variant = sweep.per_seed.front()[row].variant;
    r.cd = median_of([](const AblationRow& x) { return x.cd; }, row);
    r.emd = median_of([](const AblationRow& x) { return x.emd; }, row);
    sweep.median.push_back(r);
  }
  return sweep;
}

// ---- file outputs ----------------------------------------------------------------

void write_train_csv(const std::string& path, const TrainReport& report) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "epoch,loss,lr,seconds\n";
  char buf[160];
  for (const EpochStats& e : report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.3f\n", e.epoch,
                  e.mean_loss, e.lr, e.seconds);
    os << buf;
  }
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "sample_id,cd,emd\n";
  char buf[128];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g\n", r.sample_id, r.cd,
                  r.emd);
    os << buf;
  }
}

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& table) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "variant,cd,emd\n";
  char buf[128];
  for (const AblationRow& r : table) {
    std::snprintf(buf, sizeof buf, "%s,%.12g,%.12g\n", r.variant.c_str(), r.cd,
                  r.emd);
    os << buf;
  }
}

void write_kv_file(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

}  // namespace r2p
