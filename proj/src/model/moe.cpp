#include "cross/model/moe.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cross::model {

using namespace cross::ad;

std::vector<std::size_t> top_k(std::span<const double> values, std::size_t k) {
  if (k == 0 || k > values.size()) throw std::invalid_argument("top_k: k out of range");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(k);
  return idx;
}

Routing route_from_logits(const Tensor& logits, std::size_t k) {
  const std::size_t n = logits.rows(), e = logits.cols();
  Routing r;
  r.logits = logits;
  r.selected.resize(n);
  std::vector<std::uint8_t> mask(n * e, 0);
  for (std::size_t i = 0; i < n; ++i) {
    r.selected[i] = top_k(logits.data().subspan(i * e, e), k);
    for (std::size_t j : r.selected[i]) mask[i * e + j] = 1;
  }
  r.alpha = softmax(logits, 1.0, mask);
  return r;
}

Moe Moe::build(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, std::mt19937_64& rng) {
  Moe m;
  const std::size_t h = cfg.hidden;
  const std::size_t n = cfg.use_moe ? cfg.experts : 1;
  if (cfg.use_moe) {
    m.router1 = Dense::make(store, prefix + "moe.router1", h + cfg.pcc_hidden, cfg.router_hidden, rng);
    m.router2 = Dense::make(store, prefix + "moe.router2", cfg.router_hidden, cfg.experts, rng);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string p = prefix + (cfg.use_moe ? "moe.expert" + std::to_string(i) : std::string("moe.single"));
    Expert ex;
    ex.hidden = Dense::make(store, p + ".hidden", h, h, rng);
    ex.out = Dense::make(store, p + ".out", h, h, rng);
    m.experts.push_back(std::move(ex));
  }
  return m;
}

Moe::Out Moe::forward(const Batch& b, const Tensor& h_sp, const Tensor& z_hat, const ModelConfig& cfg) const {
  const std::size_t n = b.size;
  const std::size_t rows = n * kPhases;
  Out o;

  // only valid phase rows ever reach an expert
  std::vector<std::size_t> valid_rows;
  for (std::size_t r = 0; r < rows; ++r)
    if (b.phase_mask[r]) valid_rows.push_back(r);

  if (!cfg.use_moe) {
    o.h_moe = scatter_rows(experts[0](gather_rows(h_sp, valid_rows)), valid_rows, rows);
    return o;
  }

  const Tensor pooled = mean_pool(h_sp, b.phase_mask, kPhases);
  const Tensor z = z_hat.defined() ? z_hat : Tensor::zeros({n, cfg.pcc_hidden});
  const Tensor ctx = concat_cols({pooled, z});
  o.routing = route_from_logits(scale(router2(relu(router1(ctx))), 1.0 / cfg.tau_r), cfg.top_k);

  Tensor acc;
  for (std::size_t e = 0; e < experts.size(); ++e) {
    std::vector<std::size_t> sel_rows, sample_of_row;
    for (std::size_t r : valid_rows) {
      const std::size_t i = r / kPhases;
      const auto& s = o.routing.selected[i];
      if (std::find(s.begin(), s.end(), e) == s.end()) continue;
      sel_rows.push_back(r);
      sample_of_row.push_back(i);
    }
    if (sel_rows.empty()) continue;
    const Tensor out = experts[e](gather_rows(h_sp, sel_rows));
    const std::vector<std::size_t> col(sel_rows.size(), e);
    const Tensor weight = pick(gather_rows(o.routing.alpha, sample_of_row), col);
    const Tensor part = scatter_rows(row_scale(out, weight), sel_rows, rows);
    acc = acc.defined() ? add(acc, part) : part;
  }
  o.h_moe = acc;
  return o;
}

Tensor loss_lb(const Tensor& alpha) {
  if (alpha.rank() != 2 || alpha.rows() == 0) throw std::invalid_argument("loss_lb: empty batch");
  const std::size_t e = alpha.cols();
  const Tensor f = reshape(normalize_sum(mean_over_rows(alpha)), {1, e});
  return add_scalar(scale(sum(entropy_rows(f)), -1.0), std::log(static_cast<double>(e)));
}

Tensor loss_se(const Tensor& alpha) {
  if (alpha.rank() != 2 || alpha.rows() == 0) throw std::invalid_argument("loss_se: empty batch");
  return mean(entropy_rows(alpha));
}

Tensor loss_moe(const Tensor& lb, const Tensor& se, double lambda_lb, double lambda_se) {
  return add(scale(lb, lambda_lb), scale(se, lambda_se));
}

}  // namespace cross::model
