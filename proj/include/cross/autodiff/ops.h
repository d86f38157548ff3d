#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cross/autodiff/tensor.h"

// Differentiable ops over row-major tensors. There is no broadcasting: every
// op states its operand shapes and rejects anything else with
// std::invalid_argument naming the op and the offending shapes.
//
// Masks are byte spans with 1 = valid, 0 = padded. An empty span means
// "everything valid".
namespace cross::ad {

using Mask = std::span<const std::uint8_t>;

// [n x k] * [k x m]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[n x k] * w[k x m] + b[m]. `b` may be undefined. Rows with row_mask == 0
// produce exact zeros and receive no gradient.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Mask row_mask = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double c);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

// Gradient-stopped copy.
Tensor detach(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
// Concatenate matrices with equal row counts along columns.
Tensor concat_cols(const std::vector<Tensor>& parts);
// Columns [begin, end) of a matrix.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// [n x m] -> [n*times x m]; row r lands at rows r*times .. r*times+times-1.
Tensor repeat_rows(const Tensor& x, std::size_t times);
// Zero the rows whose mask entry is 0.
Tensor mask_rows(const Tensor& x, Mask row_mask);
// x[n x d] with each row multiplied by s[i]; s has n entries.
Tensor row_scale(const Tensor& x, const Tensor& s);
// Rows index[0], index[1], ... of x stacked into a new matrix.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
// [len(index) x d] -> [rows x d]; row i is added into output row index[i].
Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> index, std::size_t rows);
// out[i] = x[i, index[i]]
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

// Row-wise softmax of x / temperature over the last axis. Masked entries are
// exactly 0 and a fully-masked row is rejected.
Tensor softmax(const Tensor& x, double temperature = 1.0, Mask mask = {});
// Row-wise log-softmax; masked entries are reported as 0 and carry no gradient.
Tensor log_softmax(const Tensor& x, double temperature = 1.0, Mask mask = {});
// Row-wise normalisation to zero mean / unit variance, then gamma * y + beta.
// gamma and beta may be undefined (identity affine).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-10);
// Split the last axis into (value, gate) halves: value * sigmoid(gate).
Tensor glu(const Tensor& x);
// [n x d] vs [k x d] -> [n x k] cosine similarities; norms guarded by eps.
Tensor cosine_similarity(const Tensor& a, const Tensor& c, double eps = 1e-8);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
// Mean squared error over entries whose mask is 1 (mask has a.size() entries).
// Returns 0 when nothing is valid.
Tensor masked_mse(const Tensor& a, const Tensor& b, Mask mask);
// [n x m] -> [n]
Tensor sum_rows(const Tensor& x);
// [n x m] -> [m], the mean over rows.
Tensor mean_over_rows(const Tensor& x);
// x / sum(x) for a non-negative vector with positive sum.
Tensor normalize_sum(const Tensor& x);
// Shannon entropy of each row of a probability matrix, 0 log 0 = 0. [n x m] -> [n]
Tensor entropy_rows(const Tensor& p);
// x[B*group x d] -> [B x d], mean over rows of each group whose mask is 1.
Tensor mean_pool(const Tensor& x, Mask row_mask, std::size_t group);

// Scaled dot-product attention with `heads` heads. Queries q[B*q_group x d],
// keys/values k,v[B*k_group x d]. Each query attends only to valid keys of
// its own sample; masked queries output zero rows. With `bias_scale` ([heads])
// defined, head h adds bias_scale[h] * structure[q_row, j] to every score;
// `structure` is a constant [q_rows x k_group] array.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, Mask q_mask,
                            Mask k_mask, std::size_t heads, std::size_t q_group,
                            std::size_t k_group, const Tensor& bias_scale = Tensor(),
                            std::span<const double> structure = {});

}  // namespace cross::ad
