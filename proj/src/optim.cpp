#include "plmgnn/nn/optim.hpp"

#include <cmath>
#include <numbers>

namespace plmgnn::nn {
namespace {

// Moves from `from` (frac = 0) to `to` (frac = 1) along half a cosine.
double cosine_between(double from, double to, double frac) {
  return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace

double one_cycle_lr(double t, double total, const OneCycle& s) {
  if (total <= 0) throw Error(ErrorCode::invalid_argument, "one-cycle schedule needs T > 0");
  if (t < 0 || t > total) throw Error(ErrorCode::invalid_argument, "step outside [0, T]");
  const double initial = s.lr_max / s.div_factor;
  const double final_lr = initial / s.final_div_factor;
  const double warm = s.pct_start * total;
  if (t < warm) {
    const double frac = t / warm;
    return s.linear_warmup ? initial + (s.lr_max - initial) * frac
                           : cosine_between(initial, s.lr_max, frac);
  }
  const double span = total - warm;
  const double frac = span > 0 ? (t - warm) / span : 1.0;
  return cosine_between(s.lr_max, final_lr, frac);
}

}  // namespace plmgnn::nn
