#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sempos/autodiff.hpp"
#include "sempos/rng.hpp"

namespace sempos::nn {

using ad::Var;

// Named, ordered collection of trainable leaves. Order of insertion is the
// serialization order and the optimizer's iteration order.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Var var;
  };

  Var add(std::string name, Tensor init);
  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
  Var uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Var> vars() const;
  const Var& get(const std::string& name) const;
  std::size_t scalar_count() const;

 private:
  std::vector<Entry> entries_;
};

struct FcParams {
  Var weight;  // out x in
  Var bias;    // out

  std::size_t in_dim() const { return weight->shape()[1]; }
  std::size_t out_dim() const { return weight->shape()[0]; }
};

// Gate blocks are stacked row-wise in the order input, forget, output, cell.
struct LstmParams {
  Var input_weight;      // 4H x in
  Var recurrent_weight;  // 4H x H
  Var bias;              // 4H

  std::size_t input_dim() const { return input_weight->shape()[1]; }
  std::size_t hidden_dim() const { return recurrent_weight->shape()[1]; }
};

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;
};

// score_t = w . tanh(W x + U y_t + b)
struct AttentionParams {
  Var score;    // 1 x A   (w)
  Var context;  // A x Dx  (W)
  Var values;   // A x Dy  (U)
  Var bias;     // A       (b)

  std::size_t hidden_dim() const { return score->shape()[1]; }
  std::size_t context_dim() const { return context->shape()[1]; }
  std::size_t value_dim() const { return values->shape()[1]; }
};

FcParams make_fc(ParameterSet& set, const std::string& prefix, std::size_t in,
                 std::size_t out, Rng& rng);
LstmParams make_lstm(ParameterSet& set, const std::string& prefix, std::size_t in,
                     std::size_t hidden, Rng& rng);
BiLstmParams make_bilstm(ParameterSet& set, const std::string& prefix, std::size_t in,
                         std::size_t hidden, Rng& rng);
AttentionParams make_attention(ParameterSet& set, const std::string& prefix,
                               std::size_t context_dim, std::size_t value_dim,
                               std::size_t hidden, Rng& rng);

// Affine map applied to every row of x ([n] is treated as one row).
Var fully_connected(const Var& x, const FcParams& params);

// Zero state when h and c are null.
struct LstmState {
  Var h;  // 1 x H
  Var c;  // 1 x H
};

// One cell step given the already-projected input row W x_t + b (1 x 4H).
LstmState lstm_cell(const Var& projected_input, const LstmState& state,
                    const LstmParams& params);
LstmState lstm_step(const Var& x, const LstmState& state, const LstmParams& params);

// [T x in] -> [T x H], outputs in time order. `reverse` runs right to left.
Var lstm_sequence(const Var& x, const LstmParams& params, bool reverse);
// [T x in] -> [T x 2H]: forward outputs in columns [0, H), backward in [H, 2H).
Var lstm_bidirectional(const Var& x, const BiLstmParams& params);

struct AttentionKeys {
  Var values;     // T x Dy
  Var projected;  // T x A, U y_t
};

struct AttentionResult {
  Var weights;   // 1 x T, a simplex
  Var attended;  // 1 x Dy
};

AttentionKeys attention_keys(const Var& y, const AttentionParams& params);
// `context` is [1 x Dx]; longer sequences are time-mean pooled first.
AttentionResult attend(const Var& context, const AttentionKeys& keys,
                       const AttentionParams& params);
AttentionResult additive_attention(const Var& context, const Var& y,
                                   const AttentionParams& params);

Var embed_word(std::size_t token_id, const Var& table);

}  // namespace sempos::nn
