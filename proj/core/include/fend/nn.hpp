#pragma once

#include <utility>

#include "fend/rng.hpp"
#include "fend/tape.hpp"

namespace fend::nn {

using num::Tape;
using num::Tensor;

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.
Tensor init_matrix(std::size_t out, std::size_t in, Rng& rng);
Tensor init_vector(std::size_t n, Rng& rng, std::size_t fan_in);

// Fused-gate LSTM weights, gate order i, g, f, o along the first axis.
struct LstmParams {
  Tensor wx;  // [4H x in]
  Tensor wh;  // [4H x H]
  Tensor b;   // [4H]
  std::size_t hidden() const { return wh.dim(1); }
};

LstmParams make_lstm(std::size_t in, std::size_t hidden, Rng& rng);

struct LstmIds {
  Tape::Id wx, wh, b;
};

LstmIds mark_params(Tape& t, const LstmParams& p);
LstmIds bind_const(Tape& t, const LstmParams& p);

// One batched step. x: [r x in], h/m: [r x H]. Returns (h', m').
//   i,g,f,o = split(x Wx^T + h Wh^T + b)
//   m' = sigmoid(f) ∘ m + sigmoid(i) ∘ tanh(g)
//   h' = sigmoid(o) ∘ tanh(m')
std::pair<Tape::Id, Tape::Id> lstm_step(Tape& t, const LstmIds& w, Tape::Id x,
                                        Tape::Id h, Tape::Id m);

}  // namespace fend::nn
