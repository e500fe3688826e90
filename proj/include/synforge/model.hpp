#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synforge/data.hpp"
#include "synforge/grammar.hpp"
#include "synforge/tensor.hpp"
#include "synforge/transition.hpp"

namespace synforge {

struct ModelConfig {
  int embed_size = 128;
  int node_embed_size = 64;
  int rnn_size = 256;
  // Per direction; the concatenated encoder state has twice this size.
  int encoder_size = 128;
  int scorer_size = 50;
  double dropout = 0.0;
  // Normalize ApplyRule over the frontier's productions instead of all rules.
  bool masked_rule_softmax = false;

  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Frontier type and parent step seen before each action of a sequence.
struct Trace {
  std::vector<int> frontier_type;
  std::vector<int> parent_step;
};
Trace trace_actions(const Grammar& g, std::span<const Action> actions);

// Encoder output plus the attention and pointer key projections, which depend
// only on the input and are shared by every decoder step.
struct EncodedInput {
  std::vector<std::string> tokens;
  nn::Mat states;    // 2 * encoder_size x n, forward half on top
  nn::Mat att_keys;  // scorer_size x n
  nn::Mat ptr_keys;  // scorer_size x n
};

// Route probabilities of one GenToken step.
struct TokenDist {
  double p_gen = 0.0;
  double p_copy = 0.0;
  nn::Vec gen;   // P(gen) P(w | gen) per terminal-vocabulary row
  nn::Vec copy;  // P(copy) P(i | copy) per input position
  // Total probability per surface token, routes summed. The unknown row keeps
  // its marker as key.
  std::map<std::string, double> merged(const Vocab& vocab, std::span<const std::string> source) const;
};

// Decoder inputs for a batch of hypotheses (one column each).
struct StepInput {
  nn::Mat prev_action;  // embed_size x B
  nn::Mat parent;       // rnn_size + embed_size x B
  std::vector<int> frontier_type;
  nn::Mat h, c;         // previous decoder state
};

struct StepOutput {
  nn::Mat h, c;       // new decoder state
  nn::Mat context;    // 2 * encoder_size x B
  nn::Mat rule_logp;  // productions x B
  nn::Mat sel_logp;   // 2 x B, row 0 = generate, row 1 = copy
  nn::Mat gen_logp;   // terminal vocabulary x B
  nn::Mat ptr_logp;   // input length x B
};

class Model {
 public:
  Model(Grammar g, Vocab v, ModelConfig cfg = {});

  void initialize(std::uint64_t seed) { params_.initialize(seed); }

  const Grammar& grammar() const { return grammar_; }
  const Vocab& vocab() const { return vocab_; }
  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // Negative log-likelihood of a bound action sequence, built on the tape.
  // Dropout is active only when `dropout_rng` is given.
  nn::Tape::Var nll(nn::Tape& tape, std::span<const std::string> source, std::span<const Action> actions,
                    nn::Rng* dropout_rng = nullptr) const;

  // log p(a_t | ...) per step, computed with the tape-free decoder.
  std::vector<double> step_log_probs(std::span<const std::string> source, std::span<const Action> actions) const;
  double sequence_log_prob(std::span<const std::string> source, std::span<const Action> actions) const;

  EncodedInput encode(std::span<const std::string> source) const;
  // Attention weights and context for query state h.
  std::pair<nn::Vec, nn::Vec> attend(const nn::Vec& h, const EncodedInput& enc) const;
  // One decoder step for a batch of hypotheses.
  StepOutput step(const EncodedInput& enc, const StepInput& in) const;

  // Full softmax over every production for decoder state s.
  nn::Vec apply_rule_dist(const nn::Vec& s) const;
  TokenDist gen_token_dist(const nn::Vec& s, const nn::Vec& context, const EncodedInput& enc) const;

  // Embedding fed back after an action (a_{t-1}, and a_{p_t} for parent feeding).
  nn::Vec action_embedding(const Action& a) const;
  nn::Vec start_embedding() const;
  nn::Vec node_embedding(int type) const;
  int parent_size() const { return cfg_.rnn_size + cfg_.embed_size; }
  int decoder_input_size() const;

  // Log-probability of a bound action under one step's output column.
  double action_log_prob(const StepOutput& out, int col, const Action& a, int frontier_type) const;

 private:
  struct Ids {
    int src_emb, enc_f_w, enc_f_b, enc_b_w, enc_b_b;
    int rule_emb, token_emb, node_emb, start_emb;
    int dec_w, dec_b;
    int att_wh, att_wq, att_b, att_v;
    int rule_w, rule_b, rule_bias;
    int gen_w, gen_b, gen_bias;
    int sel_w, sel_b;
    int ptr_wh, ptr_wq, ptr_b, ptr_v;
  };

  int token_row(const Action& a) const;

  Grammar grammar_;
  Vocab vocab_;
  ModelConfig cfg_;
  nn::ParamSet params_;
  Ids id_{};
};

}  // namespace synforge
