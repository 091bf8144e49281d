#include "fend/grad_check.hpp"

#include <cmath>

#include "fend/errors.hpp"

namespace fend::num {

namespace {

double eval_loss(const LossBuilder& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Tape::Id> ids;
  ids.reserve(params.size());
  for (const Tensor& p : params) ids.push_back(tape.param(p));
  const Tape::Id loss = f(tape, ids);
  const double v = tape.val(loss).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

double grad_check(const LossBuilder& f, std::vector<Tensor> params, double step) {
  if (step <= 0.0) throw ContractError("grad_check: step must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Tape::Id> ids;
    ids.reserve(params.size());
    for (const Tensor& p : params) ids.push_back(tape.param(p));
    const Tape::Id loss = f(tape, ids);
    if (!std::isfinite(tape.val(loss).item())) {
      throw NumericError("grad_check: non-finite loss");
    }
    tape.backward(loss);
    analytic.reserve(ids.size());
    for (Tape::Id id : ids) analytic.push_back(tape.grad(id));
  }

  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t e = 0; e < params[pi].size(); ++e) {
      const double saved = params[pi][e];
      params[pi][e] = saved + step;
      const double lp = eval_loss(f, params);
      params[pi][e] = saved - step;
      const double lm = eval_loss(f, params);
      params[pi][e] = saved;
      const double central = (lp - lm) / (2.0 * step);
      const double err = std::abs(analytic[pi][e] - central) /
                         std::max(1.0, std::abs(central));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace fend::num
