#include "fend/nn.hpp"

#include <cmath>

namespace fend::nn {

Tensor init_matrix(std::size_t out, std::size_t in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor t({out, in});
  for (auto& v : t.vec()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor init_vector(std::size_t n, Rng& rng, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t({n});
  for (auto& v : t.vec()) v = rng.uniform(-bound, bound);
  return t;
}

LstmParams make_lstm(std::size_t in, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.wx = init_matrix(4 * hidden, in, rng);
  p.wh = init_matrix(4 * hidden, hidden, rng);
  p.b = init_vector(4 * hidden, rng, hidden);
  return p;
}

LstmIds mark_params(Tape& t, const LstmParams& p) {
  return {t.param(p.wx), t.param(p.wh), t.param(p.b)};
}

LstmIds bind_const(Tape& t, const LstmParams& p) {
  return {t.constant(p.wx), t.constant(p.wh), t.constant(p.b)};
}

std::pair<Tape::Id, Tape::Id> lstm_step(Tape& t, const LstmIds& w, Tape::Id x,
                                        Tape::Id h, Tape::Id m) {
  const std::size_t hd = t.val(w.wh).dim(1);
  const Tape::Id pre = t.add(t.linear(x, w.wx, w.b), t.linear(h, w.wh, Tape::kNone));
  const Tape::Id gi = t.sigmoid(t.col_slice(pre, 0, hd));
  const Tape::Id gg = t.tanh(t.col_slice(pre, hd, 2 * hd));
  const Tape::Id gf = t.sigmoid(t.col_slice(pre, 2 * hd, 3 * hd));
  const Tape::Id go = t.sigmoid(t.col_slice(pre, 3 * hd, 4 * hd));
  const Tape::Id m2 = t.add(t.mul(gf, m), t.mul(gi, gg));
  const Tape::Id h2 = t.mul(go, t.tanh(m2));
  return {h2, m2};
}

}  // namespace fend::nn
