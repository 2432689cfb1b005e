// r2p: dataset synthesis, training, evaluation, loss ablation, and cloud
// export for the radar-to-point-cloud reconstruction pipeline.

#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "r2p/error.hpp"
#include "r2p/metrics.hpp"
#include "r2p/model.hpp"
#include "r2p/pointcloud.hpp"
#include "r2p/synth.hpp"
#include "r2p/train.hpp"

namespace {

using namespace r2p;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::vector<Category> parse_categories(const std::string& csv) {
  std::vector<Category> cats;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) cats.push_back(parse_category(item));
  if (cats.empty()) throw UsageError("no categories given");
  return cats;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) seeds.push_back(std::stoull(item));
  if (seeds.empty()) throw UsageError("no seeds given");
  return seeds;
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct ArchFlags {
  std::size_t n = 256, m = 1024;
  std::size_t h1 = 128, h2 = 256, h3 = 512, h4 = 1024;
  std::size_t d1 = 1024, d2 = 1024;
  bool no_batchnorm = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--n", n, "input points per cloud");
    cmd->add_option("--m", m, "output points per cloud");
    cmd->add_option("--h1", h1, "encoder mlp1 hidden width");
    cmd->add_option("--h2", h2, "encoder point-feature width");
    cmd->add_option("--h3", h3, "encoder mlp2 hidden width");
    cmd->add_option("--h4", h4, "global feature width");
    cmd->add_option("--d1", d1, "decoder hidden width 1");
    cmd->add_option("--d2", d2, "decoder hidden width 2");
    cmd->add_flag("--no-batchnorm", no_batchnorm,
                  "replace batchnorm with identity");
  }
  ModelConfig to_config() const {
    ModelConfig c;
    c.n = n;
    c.m = m;
    c.h1 = h1;
    c.h2 = h2;
    c.h3 = h3;
    c.h4 = h4;
    c.d1 = d1;
    c.d2 = d2;
    c.use_batchnorm = !no_batchnorm;
    return c;
  }
  void append_kv(std::vector<std::pair<std::string, std::string>>& kv) const {
    kv.emplace_back("n", std::to_string(n));
    kv.emplace_back("m", std::to_string(m));
    kv.emplace_back("h1", std::to_string(h1));
    kv.emplace_back("h2", std::to_string(h2));
    kv.emplace_back("h3", std::to_string(h3));
    kv.emplace_back("h4", std::to_string(h4));
    kv.emplace_back("d1", std::to_string(d1));
    kv.emplace_back("d2", std::to_string(d2));
    kv.emplace_back("batchnorm", no_batchnorm ? "0" : "1");
  }
};

int run(int argc, char** argv) {
  if (const char* threads = std::getenv("R2P_THREADS")) {
    int t = std::atoi(threads);
    if (t > 0) omp_set_num_threads(t);
  }

  CLI::App app{"radar-style point cloud reconstruction pipeline"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string sy_category = "box";
  std::size_t sy_count = 100;
  std::string sy_out;
  std::uint64_t sy_seed = 1;
  std::string sy_corruption_file;
  SynthConfig sy_cfg;
  synth->add_option("--category", sy_category,
                    "object category (comma list cycles per sample)");
  synth->add_option("--count", sy_count, "number of samples")->required();
  synth->add_option("--out", sy_out, "output .r2pd path")->required();
  synth->add_option("--seed", sy_seed, "base seed");
  synth->add_option("--corruption-file", sy_corruption_file,
                    "key=value corruption overrides");
  synth->add_option("--n", sy_cfg.n, "input cloud size");
  synth->add_option("--m", sy_cfg.m, "ground-truth cloud size");
  synth->add_option("--views", sy_cfg.views, "cameras per object");
  synth->add_option("--image-size", sy_cfg.rig.width, "depth image side");
  synth->add_option("--surface-samples", sy_cfg.surface_samples,
                    "dense surface samples per object");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_out_dir, tr_loss = "l1";
  TrainConfig tr_cfg;
  ArchFlags tr_arch;
  std::size_t tr_test_count = 0;
  train_cmd->add_option("--data", tr_data, "dataset .r2pd path")->required();
  train_cmd->add_option("--out-dir", tr_out_dir, "run directory")->required();
  train_cmd->add_option("--loss", tr_loss, "loss variant l1..l5");
  train_cmd->add_option("--epochs", tr_cfg.epochs, "training epochs (even)");
  train_cmd->add_option("--batch", tr_cfg.batch_size, "batch size");
  train_cmd->add_option("--lr", tr_cfg.lr_initial, "initial learning rate");
  train_cmd->add_option("--alpha", tr_cfg.loss.alpha, "second-block loss weight");
  train_cmd->add_option("--seed", tr_cfg.seed, "seed");
  train_cmd->add_option("--checkpoint-interval", tr_cfg.checkpoint_interval,
                        "epochs between checkpoints");
  train_cmd->add_option("--emd-cap", tr_cfg.emd_cap,
                        "max points for the exact EMD solver");
  train_cmd->add_option("--test-count", tr_test_count,
                        "held-out samples (default: a fifteenth)");
  tr_arch.attach(train_cmd);

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_model, ev_data, ev_out;
  std::size_t ev_emd_cap = kDefaultExactCap;
  eval_cmd->add_option("--model", ev_model, "checkpoint path")->required();
  eval_cmd->add_option("--data", ev_data, "dataset .r2pd path")->required();
  eval_cmd->add_option("--out", ev_out, "output csv path")->required();
  eval_cmd->add_option("--emd-cap", ev_emd_cap,
                       "max points for the exact EMD solver");

  // ---- ablate ----
  auto* ablate_cmd =
      app.add_subcommand("ablate", "train all five loss variants");
  std::string ab_data, ab_out_dir, ab_seeds = "1,2,3";
  TrainConfig ab_cfg;
  ArchFlags ab_arch;
  ablate_cmd->add_option("--data", ab_data, "dataset .r2pd path")->required();
  ablate_cmd->add_option("--out-dir", ab_out_dir, "run directory")->required();
  ablate_cmd->add_option("--seeds", ab_seeds, "comma-separated seeds");
  ablate_cmd->add_option("--epochs", ab_cfg.epochs, "training epochs (even)");
  ablate_cmd->add_option("--batch", ab_cfg.batch_size, "batch size");
  ablate_cmd->add_option("--lr", ab_cfg.lr_initial, "initial learning rate");
  ablate_cmd->add_option("--alpha", ab_cfg.loss.alpha, "second-block loss weight");
  ablate_cmd->add_option("--emd-cap", ab_cfg.emd_cap,
                         "max points for the exact EMD solver");
  ab_arch.attach(ablate_cmd);

  // ---- export ----
  auto* export_cmd =
      app.add_subcommand("export", "run a checkpoint on one cloud");
  std::string ex_model, ex_input, ex_out;
  export_cmd->add_option("--model", ex_model, "checkpoint path")->required();
  export_cmd->add_option("--input", ex_input, "input cloud (.xyz/.ply)")
      ->required();
  export_cmd->add_option("--out", ex_out, "output cloud (.xyz/.ply)")
      ->required();

  // ---- metrics ----
  auto* metrics_cmd =
      app.add_subcommand("metrics", "print CD and EMD between two clouds");
  std::string me_a, me_b;
  std::size_t me_emd_cap = kDefaultExactCap;
  metrics_cmd->add_option("--a", me_a, "first cloud")->required();
  metrics_cmd->add_option("--b", me_b, "second cloud")->required();
  metrics_cmd->add_option("--emd-cap", me_emd_cap,
                          "max points for the exact EMD solver");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage message
    return kExitUsage;
  }

  if (*synth) {
    sy_cfg.categories = parse_categories(sy_category);
    sy_cfg.count = sy_count;
    sy_cfg.seed = sy_seed;
    sy_cfg.rig.height = sy_cfg.rig.width;
    if (!sy_corruption_file.empty())
      sy_cfg.corruption = CorruptionSpec::load(sy_corruption_file);
    std::cout << "synth: " << sy_cfg.count << " samples, categories "
              << sy_category << ", n=" << sy_cfg.n << ", m=" << sy_cfg.m
              << ", seed=" << sy_cfg.seed << "\n";
    Dataset ds = build_dataset(sy_cfg);
    ds.save(sy_out);
    write_kv_file(sy_out + ".config.txt", synth_config_kv(sy_cfg));
    std::cout << "wrote " << ds.size() << " samples to " << sy_out << "\n";
    return kExitOk;
  }

  if (*train_cmd) {
    tr_cfg.loss = LossSpec::variant(tr_loss, tr_cfg.loss.alpha);
    tr_cfg.out_dir = tr_out_dir;
    Dataset all = Dataset::load(tr_data);
    auto [train_set, test_set] = split_dataset(all, tr_test_count);
    // Sizes follow the dataset unless overridden on the command line.
    if (!train_cmd->count("--n")) tr_arch.n = train_set.samples[0].input.size();
    if (!train_cmd->count("--m"))
      tr_arch.m = train_set.samples[0].ground_truth.size();
    tr_cfg.arch = tr_arch.to_config();

    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("command", "train");
    kv.emplace_back("data", tr_data);
    kv.emplace_back("loss", tr_cfg.loss.name());
    kv.emplace_back("alpha", num(tr_cfg.loss.alpha));
    kv.emplace_back("epochs", std::to_string(tr_cfg.epochs));
    kv.emplace_back("batch", std::to_string(tr_cfg.batch_size));
    kv.emplace_back("lr", num(tr_cfg.lr_initial));
    kv.emplace_back("seed", std::to_string(tr_cfg.seed));
    kv.emplace_back("train_samples", std::to_string(train_set.size()));
    kv.emplace_back("test_samples", std::to_string(test_set.size()));
    kv.emplace_back("emd_cap", std::to_string(tr_cfg.emd_cap));
    tr_arch.append_kv(kv);
    std::filesystem::create_directories(tr_out_dir);
    write_kv_file(tr_out_dir + "/config.txt", kv);

    std::cout << "train: " << train_set.size() << " samples, loss "
              << tr_cfg.loss.name() << ", epochs " << tr_cfg.epochs
              << ", batch " << tr_cfg.batch_size << ", lr " << tr_cfg.lr_initial
              << ", n=" << tr_cfg.arch.n << ", m=" << tr_cfg.arch.m << "\n";
    R2PModel model(tr_cfg.arch, tr_cfg.seed);
    model.loss_spec() = tr_cfg.loss;
    TrainReport report = train(model, train_set, tr_cfg, &test_set);
    write_train_csv(tr_out_dir + "/report.csv", report);
    if (!report.evals.empty()) {
      write_eval_csv(tr_out_dir + "/eval.csv", report.evals.back().second);
      const EvalReport& ev = report.evals.back().second;
      std::cout << "held-out mean cd=" << ev.mean_cd
                << " emd=" << ev.mean_emd
                << (ev.emd_approximate ? " (emd approximate)" : "") << "\n";
    }
    std::cout << "run written to " << tr_out_dir << "\n";
    return kExitOk;
  }

  if (*eval_cmd) {
    R2PModel model = load_model(ev_model);
    Dataset ds = Dataset::load(ev_data);
    EvalReport report = evaluate(model, ds, ev_emd_cap);
    write_eval_csv(ev_out, report);
    write_kv_file(ev_out + ".config.txt",
                  {{"command", "eval"},
                   {"model", ev_model},
                   {"data", ev_data},
                   {"emd_cap", std::to_string(ev_emd_cap)},
                   {"emd_approximate", report.emd_approximate ? "1" : "0"}});
    std::cout << "eval: " << report.rows.size() << " samples, mean cd="
              << report.mean_cd << " emd=" << report.mean_emd
              << (report.emd_approximate ? " (emd approximate)" : "") << "\n";
    return kExitOk;
  }

  if (*ablate_cmd) {
    ab_cfg.arch = ab_arch.to_config();
    ab_cfg.out_dir = ab_out_dir;
    Dataset ds = Dataset::load(ab_data);
    if (!ablate_cmd->count("--n")) ab_cfg.arch.n = ds.samples[0].input.size();
    if (!ablate_cmd->count("--m"))
      ab_cfg.arch.m = ds.samples[0].ground_truth.size();
    std::vector<std::uint64_t> seeds = parse_seeds(ab_seeds);

    std::filesystem::create_directories(ab_out_dir);
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("command", "ablate");
    kv.emplace_back("data", ab_data);
    kv.emplace_back("seeds", ab_seeds);
    kv.emplace_back("epochs", std::to_string(ab_cfg.epochs));
    kv.emplace_back("batch", std::to_string(ab_cfg.batch_size));
    kv.emplace_back("lr", num(ab_cfg.lr_initial));
    kv.emplace_back("alpha", num(ab_cfg.loss.alpha));
    ab_arch.append_kv(kv);
    write_kv_file(ab_out_dir + "/config.txt", kv);

    AblationSweep sweep = ablate_losses_sweep(ds, ab_cfg, seeds);
    for (std::size_t i = 0; i < seeds.size(); ++i)
      write_ablation_csv(
          ab_out_dir + "/ablation_seed" + std::to_string(seeds[i]) + ".csv",
          sweep.per_seed[i]);
    write_ablation_csv(ab_out_dir + "/ablation_median.csv", sweep.median);
    std::cout << "variant  cd            emd\n";
    for (const AblationRow& r : sweep.median)
      std::cout << r.variant << "       " << r.cd << "   " << r.emd << "\n";
    std::cout << "run written to " << ab_out_dir << "\n";
    return kExitOk;
  }

  if (*export_cmd) {
    R2PModel model = load_model(ex_model);
    PointCloud in = read_cloud_auto(ex_input);
    if (in.empty()) throw IoError("export: input cloud is empty");
    PointCloud sized =
        resample(in, model.config().n, /*seed=*/0x5eedULL);
    auto [norm, params] = normalize(sized);
    Tensor batch = clouds_to_tensor({norm});
    auto [p_m, p_o] = model.forward(batch, /*training=*/false);
    PointCloud out =
        denormalize(tensor_row_to_cloud(p_o, 0, CloudSource::output), params);
    write_cloud_auto(ex_out, out);
    write_kv_file(ex_out + ".config.txt", {{"command", "export"},
                                           {"model", ex_model},
                                           {"input", ex_input},
                                           {"out", ex_out}});
    std::cout << "wrote " << out.size() << " points to " << ex_out << "\n";
    return kExitOk;
  }

  if (*metrics_cmd) {
    PointCloud a = read_cloud_auto(me_a);
    PointCloud b = read_cloud_auto(me_b);
    double cd = chamfer(a, b);
    double emd;
    bool approx = false;
    if (a.size() == b.size() && a.size() <= me_emd_cap) {
      emd = emd_exact(a, b, me_emd_cap).cost;
    } else if (a.size() == b.size()) {
      emd = emd_approx(a, b).cost;
      approx = true;
    } else {
      throw UsageError("metrics: EMD needs equal point counts, got " +
                       std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) +
                       " (CD would be " + num(cd) + ")");
    }
    std::cout << "cd=" << cd << " emd=" << emd
              << (approx ? " (approximate)" : "") << "\n";
    return kExitOk;
  }

  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const r2p::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const r2p::IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const r2p::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
