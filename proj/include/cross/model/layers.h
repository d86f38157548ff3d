#pragma once

#include <cmath>
#include <random>
#include <string>

#include "cross/autodiff/ops.h"
#include "cross/autodiff/params.h"

namespace cross::model {

// Dense layer registered under `path`.w / `path`.b, initialised uniform in
// +-1/sqrt(fan_in).
struct Dense {
  ad::Tensor w;
  ad::Tensor b;

  static Dense make(ad::ParamStore& store, const std::string& path, std::size_t in, std::size_t out,
                    std::mt19937_64& rng, bool bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Dense d;
    d.w = store.add_uniform(path + ".w", {in, out}, bound, rng);
    if (bias) d.b = store.add_uniform(path + ".b", {out}, bound, rng);
    return d;
  }

  ad::Tensor operator()(const ad::Tensor& x, ad::Mask rows = {}) const { return ad::linear(x, w, b, rows); }
};

}  // namespace cross::model
