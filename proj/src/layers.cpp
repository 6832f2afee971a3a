#include "sempos/layers.hpp"

#include <cmath>

#include "sempos/errors.hpp"

namespace sempos::nn {

Var ParameterSet::add(std::string name, Tensor init) {
  for (const auto& e : entries_) {
    if (e.name == name) throw InvalidConfig("duplicate parameter name " + name);
  }
  auto var = ad::parameter(std::move(init));
  entries_.push_back({std::move(name), var});
  return var;
}

Var ParameterSet::uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(t));
}

std::vector<Var> ParameterSet::vars() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.var);
  return out;
}

const Var& ParameterSet::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.var;
  }
  throw InvalidConfig("no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var->value.size();
  return n;
}

FcParams make_fc(ParameterSet& set, const std::string& prefix, std::size_t in,
                 std::size_t out, Rng& rng) {
  return {set.uniform(prefix + ".weight", {out, in}, in, rng),
          set.uniform(prefix + ".bias", {out}, in, rng)};
}

LstmParams make_lstm(ParameterSet& set, const std::string& prefix, std::size_t in,
                     std::size_t hidden, Rng& rng) {
  return {set.uniform(prefix + ".W", {4 * hidden, in}, in, rng),
          set.uniform(prefix + ".U", {4 * hidden, hidden}, hidden, rng),
          set.uniform(prefix + ".b", {4 * hidden}, hidden, rng)};
}

BiLstmParams make_bilstm(ParameterSet& set, const std::string& prefix, std::size_t in,
                         std::size_t hidden, Rng& rng) {
  auto fwd = make_lstm(set, prefix + ".fwd", in, hidden, rng);
  auto bwd = make_lstm(set, prefix + ".bwd", in, hidden, rng);
  return {fwd, bwd};
}

AttentionParams make_attention(ParameterSet& set, const std::string& prefix,
                               std::size_t context_dim, std::size_t value_dim,
                               std::size_t hidden, Rng& rng) {
  return {set.uniform(prefix + ".w", {1, hidden}, hidden, rng),
          set.uniform(prefix + ".W", {hidden, context_dim}, context_dim, rng),
          set.uniform(prefix + ".U", {hidden, value_dim}, value_dim, rng),
          set.uniform(prefix + ".b", {hidden}, hidden, rng)};
}

namespace {

Var as_matrix(const Var& x) {
  if (x->value.rank() == 1) return ad::reshape(x, {1, x->value.size()});
  return x;
}

}  // namespace

Var fully_connected(const Var& x, const FcParams& params) {
  return ad::linear(as_matrix(x), params.weight, params.bias);
}

LstmState lstm_cell(const Var& projected_input, const LstmState& state,
                    const LstmParams& params) {
  const std::size_t hidden = params.hidden_dim();
  if (projected_input->value.size() != 4 * hidden) {
    throw DimensionMismatch("lstm_cell: projected input has " +
                            std::to_string(projected_input->value.size()) +
                            " values, expected " + std::to_string(4 * hidden));
  }
  Var z = projected_input;
  if (state.h) z = ad::add(z, ad::linear(state.h, params.recurrent_weight, nullptr));
  Var sig = ad::sigmoid(ad::slice_cols(z, 0, 3 * hidden));
  Var in_gate = ad::slice_cols(sig, 0, hidden);
  Var forget_gate = ad::slice_cols(sig, hidden, hidden);
  Var out_gate = ad::slice_cols(sig, 2 * hidden, hidden);
  Var candidate = ad::tanh(ad::slice_cols(z, 3 * hidden, hidden));
  Var c = ad::mul(in_gate, candidate);
  if (state.c) c = ad::add(ad::mul(forget_gate, state.c), c);
  Var h = ad::mul(out_gate, ad::tanh(c));
  return {h, c};
}

LstmState lstm_step(const Var& x, const LstmState& state, const LstmParams& params) {
  if (x->value.size() != params.input_dim()) {
    throw DimensionMismatch("lstm_step: input has " + std::to_string(x->value.size()) +
                            " values, expected " + std::to_string(params.input_dim()));
  }
  return lstm_cell(ad::linear(as_matrix(x), params.input_weight, params.bias), state,
                   params);
}

Var lstm_sequence(const Var& x, const LstmParams& params, bool reverse) {
  const Var seq = as_matrix(x);
  if (seq->shape()[0] == 0) throw EmptyInput("lstm over an empty sequence");
  if (seq->shape()[1] != params.input_dim()) {
    throw DimensionMismatch("lstm: input width " + std::to_string(seq->shape()[1]) +
                            " vs parameter width " + std::to_string(params.input_dim()));
  }
  const std::size_t steps = seq->shape()[0];
  Var projected = ad::linear(seq, params.input_weight, params.bias);
  std::vector<Var> outputs(steps);
  LstmState state;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    state = lstm_cell(ad::slice_rows(projected, t, 1), state, params);
    outputs[t] = state.h;
  }
  return ad::concat(outputs, 0);
}

Var lstm_bidirectional(const Var& x, const BiLstmParams& params) {
  return ad::concat({lstm_sequence(x, params.forward, false),
                     lstm_sequence(x, params.backward, true)},
                    1);
}

AttentionKeys attention_keys(const Var& y, const AttentionParams& params) {
  const Var values = as_matrix(y);
  if (values->shape()[1] != params.value_dim()) {
    throw DimensionMismatch("attention: value width " + std::to_string(values->shape()[1]) +
                            " vs " + std::to_string(params.value_dim()));
  }
  return {values, ad::linear(values, params.values, nullptr)};
}

AttentionResult attend(const Var& context, const AttentionKeys& keys,
                       const AttentionParams& params) {
  Var x = as_matrix(context);
  if (x->shape()[0] != 1) x = ad::mean_rows(x);
  if (x->shape()[1] != params.context_dim()) {
    throw DimensionMismatch("attention: context width " + std::to_string(x->shape()[1]) +
                            " vs " + std::to_string(params.context_dim()));
  }
  const std::size_t steps = keys.values->shape()[0];
  Var query = ad::linear(x, params.context, params.bias);
  Var hidden = ad::tanh(ad::add_row(keys.projected, query));
  Var scores = ad::reshape(ad::linear(hidden, params.score, nullptr), {1, steps});
  Var weights = ad::softmax(scores);
  return {weights, ad::matmul(weights, keys.values)};
}

AttentionResult additive_attention(const Var& context, const Var& y,
                                   const AttentionParams& params) {
  return attend(context, attention_keys(y, params), params);
}

Var embed_word(std::size_t token_id, const Var& table) {
  return ad::gather_row(table, token_id);
}

}  // namespace sempos::nn
