#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "r2p/metrics.hpp"
#include "r2p/pointcloud.hpp"
#include "r2p/tensor.hpp"

namespace r2p {

enum class MetricKind : std::uint8_t { cd = 0, emd = 1, cd_emd = 2 };

std::string metric_name(MetricKind k);

// Which metric plays the first-block and second-block roles, and the weight
// of the second term. The five named variants l1..l5 are the ablation axis.
struct LossSpec {
  MetricKind d1 = MetricKind::cd;
  MetricKind d2 = MetricKind::cd;
  double alpha = 0.1;

  static LossSpec variant(const std::string& name, double alpha = 0.1);
  std::string name() const;  // "l1".."l5" or "custom"
};

struct ModelConfig {
  std::size_t n = 256;   // input points
  std::size_t m = 1024;  // intermediate and output points
  std::size_t h1 = 128, h2 = 256, h3 = 512, h4 = 1024;
  std::size_t d1 = 1024, d2 = 1024;
  bool use_batchnorm = true;

  void validate() const;
};

struct LinearLayer {
  Tensor w, b;
  LinearLayer() = default;
  LinearLayer(std::size_t din, std::size_t dout, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

struct BatchNormLayer {
  Tensor gamma, beta;
  BatchNormState state;
  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t width);
  Tensor operator()(const Tensor& x, bool training) {
    return batchnorm(x, gamma, beta, state, training);
  }
};

// Two linear layers applied point-wise, with batchnorm and ReLU between.
// The same weights touch every point, which keeps the block permutation
// equivariant.
struct SharedMlp {
  LinearLayer first, second;
  BatchNormLayer norm;
  bool use_batchnorm = true;

  SharedMlp() = default;
  SharedMlp(std::size_t din, std::size_t hidden, std::size_t dout,
            bool use_bn, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training);
};

struct EncoderParams {
  SharedMlp mlp1;  // 3 -> h1 -> h2
  SharedMlp mlp2;  // 2*h2 -> h3 -> h4
};

struct DecoderParams {
  LinearLayer fc1, fc2, fc3;  // h4 -> d1 -> d2 -> 3m
};

// Point features -> pooled global feature: shared MLP, max-pool, concat of
// the global feature onto every point, second shared MLP, final max-pool.
Tensor encode(EncoderParams& block, const Tensor& pc, bool training);

// Global feature -> m x 3 point cloud through three FC layers (ReLU after
// the first two, none after the last) and a reshape.
Tensor decode(const DecoderParams& block, const Tensor& g, std::size_t m);

class R2PModel {
 public:
  R2PModel(const ModelConfig& config, std::uint64_t seed);

  // P_r [B,n,3] -> (P_m [B,m,3], P_o [B,m,3]); both blocks run in sequence
  // and both outputs are returned because the loss scores each.
  std::pair<Tensor, Tensor> forward(const Tensor& p_r, bool training);

  const ModelConfig& config() const { return config_; }
  LossSpec& loss_spec() { return loss_spec_; }
  const LossSpec& loss_spec() const { return loss_spec_; }

  // Trainable tensors in declaration order (checkpoint and optimizer order).
  std::vector<Tensor*> parameters();

  EncoderParams& encoder(int block) { return block == 0 ? enc1_ : enc2_; }
  DecoderParams& decoder(int block) { return block == 0 ? dec1_ : dec2_; }
  std::vector<BatchNormLayer*> batchnorm_layers();

 private:
  friend void save_model(std::ostream&, const R2PModel&);
  ModelConfig config_;
  LossSpec loss_spec_;
  EncoderParams enc1_, enc2_;
  DecoderParams dec1_, dec2_;
};

// ---- loss -------------------------------------------------------------------

// Scalar graph node: mean over the batch of metric(pred[b], target[b]).
// Backward scatters the metric subgradients into pred. EMD terms hold the
// matching fixed (recomputed on every forward) and use the exact solver up
// to emd_cap points, the auction solver above.
Tensor pointset_distance(const Tensor& pred,
                         const std::vector<PointCloud>& targets,
                         MetricKind kind,
                         std::size_t emd_cap = kDefaultExactCap);

// L = d1(P_m, gt) + alpha * d2(P_o, gt), batch-averaged.
Tensor r2p_loss(const Tensor& p_m, const Tensor& p_o,
                const std::vector<PointCloud>& ground_truth,
                const LossSpec& spec, std::size_t emd_cap = kDefaultExactCap);

// ---- tensor/cloud bridging ---------------------------------------------------

Tensor clouds_to_tensor(const std::vector<PointCloud>& clouds);
PointCloud tensor_row_to_cloud(const Tensor& t, std::size_t b, CloudSource src);
std::vector<PointCloud> tensor_to_clouds(const Tensor& t, CloudSource src);

// ---- checkpoints (magic "R2PM") ----------------------------------------------

void save_model(const std::string& path, const R2PModel& model);
void save_model(std::ostream& os, const R2PModel& model);
R2PModel load_model(const std::string& path);
R2PModel load_model(std::istream& is);

}  // namespace r2p
