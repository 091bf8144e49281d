#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fend/cluster.hpp"
#include "fend/nn.hpp"
#include "fend/trajdata.hpp"

namespace fend::extractor {

using num::Tape;
using num::Tensor;

struct ExtractorConfig {
  std::size_t conv_channels = 16;
  std::size_t kernel = 3;
  std::size_t embed_dim = 128;  // recurrent hidden size == embedding size
  std::size_t dec_input = 32;
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double lr_decay = 0.0;  // lr(e) = lr * exp(-lr_decay * e)
  double pcl_aux_weight = 0.02;
  std::size_t aux_warmup_epochs = 3;  // reconstruction-only epochs before the aux kicks in
  std::vector<std::size_t> levels = {20, 50, 100};  // aux-PCL hierarchy
  double tau = 0.1;
  double alpha = 10.0;
  bool future_enhanced = true;  // encode obs+fut; false: obs only
};

struct ExtractorParams {
  ExtractorConfig cfg;
  Tensor conv_w;  // [C x 2 x k]
  Tensor conv_b;  // [C]
  nn::LstmParams enc;   // input dim C
  nn::LstmParams dec;   // input dim dec_input
  Tensor seed_x_w, seed_x_b;  // embedding -> decoder input
  Tensor seed_h_w, seed_h_b;  // embedding -> decoder h0
  Tensor out_w, out_b;        // hidden -> 2D position per step

  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
};

ExtractorParams make_extractor(const ExtractorConfig& cfg, Rng& rng);

// Embedding of one sample: conv over per-step displacements of the full
// (obs [+ fut]) trajectory, tanh, recurrent pass; final hidden state.
std::vector<double> extract(const ExtractorParams& params,
                            const traj::TrajectorySample& sample);

// Batched embeddings, one row per sample, in the given order.
cluster::FeatureMatrix extract_all(const ExtractorParams& params,
                                   const std::vector<traj::TrajectorySample>& samples);

// Decodes T positions from an embedding.
std::vector<traj::Point> reconstruct(const ExtractorParams& params,
                                     const std::vector<double>& embedding, std::size_t t);

struct ExtractorTrainLog {
  std::vector<double> recon_loss;  // per epoch (MSE)
  std::vector<double> pcl_loss;    // per epoch (0 when aux weight is 0)
};

// Autoencoder training with the contrastive auxiliary: per epoch, embeddings
// are re-clustered (the EM step) and the batch loss is
// reconstruction MSE + pcl_aux_weight * ProtoNCE over normalized embeddings.
ExtractorParams train_extractor(const traj::DatasetSplit& split, const ExtractorConfig& cfg,
                                std::uint64_t seed, ExtractorTrainLog* log = nullptr);

// Mean reconstruction error (mean over samples and steps of the L2 position
// error) of the autoencoder on the given samples.
double mean_reconstruction_error(const ExtractorParams& params,
                                 const std::vector<traj::TrajectorySample>& samples);

}  // namespace fend::extractor
