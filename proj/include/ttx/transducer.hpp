#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ttx/model.hpp"
#include "ttx/tensor.hpp"

namespace ttx {

inline constexpr int kBlank = 0;  // output index 0: blank, also start symbol
inline constexpr int kMaxSymbolsPerFrame = 10;

inline float log_sum_exp(float a, float b) {
  if (a == -std::numeric_limits<float>::infinity()) return b;
  if (b == -std::numeric_limits<float>::infinity()) return a;
  const float m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PredictorState {
  std::vector<Tensor> h;  // per layer, [hidden]
  std::vector<Tensor> c;

  static PredictorState zero(const PredictorWeights& w) {
    PredictorState s;
    for (size_t l = 0; l < w.lstm.size(); ++l) {
      s.h.emplace_back(std::vector<int64_t>{w.hidden});
      s.c.emplace_back(std::vector<int64_t>{w.hidden});
    }
    return s;
  }
};

// Embeds a label (kBlank doubles as the start symbol), runs the LSTM stack,
// returns the top hidden vector g and the advanced state. Gate order in the
// packed weights is i, f, g, o.
inline std::pair<Tensor, PredictorState> predictor_step(const PredictorState& state,
                                                        int label,
                                                        const PredictorWeights& w) {
  if (label < 0 || label >= w.embedding.rows())
    throw ArgError("predictor_step: label out of range");
  const int hid = w.hidden;
  Tensor x = w.embedding.row(label);
  PredictorState next = state;
  for (size_t l = 0; l < w.lstm.size(); ++l) {
    const Tensor gx = w.lstm[l].w_x.apply(x);
    const Tensor gh = w.lstm[l].w_h.apply(state.h[l]);
    Tensor& hv = next.h[l];
    Tensor& cv = next.c[l];
    for (int i = 0; i < hid; ++i) {
      const float gi = sigmoidf(gx.data[i] + gh.data[i]);
      const float gf = sigmoidf(gx.data[i + hid] + gh.data[i + hid]);
      const float gg = std::tanh(gx.data[i + 2 * hid] + gh.data[i + 2 * hid]);
      const float go = sigmoidf(gx.data[i + 3 * hid] + gh.data[i + 3 * hid]);
      const float cnew = gf * state.c[l].data[i] + gi * gg;
      cv.data[i] = cnew;
      hv.data[i] = go * std::tanh(cnew);
    }
    x = hv;
  }
  return {x, next};
}

// log softmax(W_o relu(f + g) + b) over V+1 symbols.
inline Tensor joint_step(const Tensor& f, const Tensor& g, const Linear& joint_out) {
  if (f.numel() != g.numel()) throw ShapeError("joint_step: f/g dimension mismatch");
  Tensor h = f;
  for (size_t i = 0; i < h.data.size(); ++i) {
    h.data[i] += g.data[i];
    if (h.data[i] < 0.0f) h.data[i] = 0.0f;
  }
  Tensor logits = joint_out.apply(h);
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : logits.data) mx = std::max(mx, v);
  float denom = 0.0f;
  for (float v : logits.data) denom += std::exp(v - mx);
  const float lse = mx + std::log(denom);
  for (float& v : logits.data) v -= lse;
  return logits;
}

// Double-precision log softmax over the joint's float logits. The forward
// scoring path runs in double so that the lattice probabilities it defines
// normalize to well below float rounding.
inline std::vector<double> joint_log_double(const Tensor& f, const Tensor& g,
                                            const Linear& joint_out) {
  if (f.numel() != g.numel()) throw ShapeError("joint_log_double: f/g dimension mismatch");
  Tensor h = f;
  for (size_t i = 0; i < h.data.size(); ++i) {
    h.data[i] += g.data[i];
    if (h.data[i] < 0.0f) h.data[i] = 0.0f;
  }
  const Tensor logits = joint_out.apply(h);
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : logits.data) mx = std::max(mx, static_cast<double>(v));
  double denom = 0.0;
  for (float v : logits.data) denom += std::exp(v - mx);
  const double lse = mx + std::log(denom);
  std::vector<double> out(logits.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = logits.data[i] - lse;
  return out;
}

// log P(y | x): forward DP over the (T, U+1) lattice with log-sum-exp over
// the blank transition from (t-1, u) and the label transition from (t, u-1).
inline double transducer_forward_logprob(const Tensor& enc, const std::vector<int>& labels,
                                         const ModelWeights& model) {
  const int64_t t_len = enc.rows();
  const int u_len = static_cast<int>(labels.size());
  if (t_len < 1) throw ArgError("transducer_forward_logprob: empty encoding");
  for (int y : labels)
    if (y < 1 || y > model.vocab_size)
      throw ArgError("transducer_forward_logprob: label out of range");

  // Predictor outputs g_u for every prefix length u = 0..U.
  std::vector<Tensor> g(static_cast<size_t>(u_len) + 1);
  PredictorState st = PredictorState::zero(model.predictor);
  {
    auto [g0, st0] = predictor_step(st, kBlank, model.predictor);
    g[0] = std::move(g0);
    st = std::move(st0);
  }
  for (int u = 1; u <= u_len; ++u) {
    auto [gu, stu] = predictor_step(st, labels[static_cast<size_t>(u - 1)], model.predictor);
    g[static_cast<size_t>(u)] = std::move(gu);
    st = std::move(stu);
  }

  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> prev(static_cast<size_t>(u_len) + 1, ninf);
  std::vector<double> cur(static_cast<size_t>(u_len) + 1, ninf);
  Tensor f0({enc.cols()});
  std::vector<std::vector<double>> logp(static_cast<size_t>(u_len) + 1);
  double last_blank = ninf;
  for (int64_t t = 0; t < t_len; ++t) {
    std::copy(enc.row_ptr(t), enc.row_ptr(t) + enc.cols(), f0.data.begin());
    for (int u = 0; u <= u_len; ++u)
      logp[static_cast<size_t>(u)] =
          joint_log_double(f0, g[static_cast<size_t>(u)], model.joint_out);
    for (int u = 0; u <= u_len; ++u) {
      double v = ninf;
      if (t == 0 && u == 0) v = 0.0;
      if (t > 0) {
        // Blank at (t-1, u) was folded into prev[u] already.
        v = prev[static_cast<size_t>(u)];
      }
      if (u > 0) {
        const double lbl = logp[static_cast<size_t>(u - 1)]
                               [static_cast<size_t>(labels[static_cast<size_t>(u - 1)])];
        v = log_sum_exp(v, cur[static_cast<size_t>(u - 1)] + lbl);
      }
      cur[static_cast<size_t>(u)] = v;
    }
    last_blank = cur[static_cast<size_t>(u_len)] + logp[static_cast<size_t>(u_len)][kBlank];
    for (int u = 0; u <= u_len; ++u) {
      // Fold the blank emission at (t, u) to become alpha ready for t+1.
      prev[static_cast<size_t>(u)] =
          cur[static_cast<size_t>(u)] + logp[static_cast<size_t>(u)][kBlank];
      cur[static_cast<size_t>(u)] = ninf;
    }
  }
  return last_blank;
}

// Incremental greedy decoder: feed encoder frames as they arrive. At each
// frame, non-blank argmaxes advance the predictor until blank wins; argmax
// ties break to the lowest index.
class GreedyDecoder {
 public:
  explicit GreedyDecoder(const ModelWeights& model)
      : model_(&model), state_(PredictorState::zero(model.predictor)) {
    auto [g, st] = predictor_step(state_, kBlank, model.predictor);
    g_ = std::move(g);
    state_ = std::move(st);
  }

  void feed_frame(const float* f, int64_t d) {
    Tensor ft({d});
    std::copy(f, f + d, ft.data.begin());
    for (int emitted = 0; emitted < kMaxSymbolsPerFrame; ++emitted) {
      const Tensor logp = joint_step(ft, g_, model_->joint_out);
      int best = 0;
      for (int k = 1; k < static_cast<int>(logp.numel()); ++k)
        if (logp.data[static_cast<size_t>(k)] > logp.data[static_cast<size_t>(best)]) best = k;
      if (best == kBlank) break;
      tokens_.push_back(best);
      auto [g, st] = predictor_step(state_, best, model_->predictor);
      g_ = std::move(g);
      state_ = std::move(st);
    }
  }

  void feed(const Tensor& enc) {
    for (int64_t t = 0; t < enc.rows(); ++t) feed_frame(enc.row_ptr(t), enc.cols());
  }

  const std::vector<int>& tokens() const { return tokens_; }

 private:
  const ModelWeights* model_;
  PredictorState state_;
  Tensor g_;
  std::vector<int> tokens_;
};

inline std::vector<int> greedy_decode(const Tensor& enc, const ModelWeights& model) {
  GreedyDecoder dec(model);
  dec.feed(enc);
  return dec.tokens();
}

struct Hypothesis {
  std::vector<int> tokens;
  float log_prob = 0.0f;
  PredictorState pred_state;
  Tensor pred_out;  // cached g for the current prefix
};

// Frame-synchronous beam search with prefix merging: per frame, hypotheses
// extend by blank (finish the frame) or by a label (stay on the frame);
// identical prefixes merge by log-sum-exp, so scores approximate the full
// sequence probability rather than a single best alignment.
inline std::vector<std::pair<std::vector<int>, float>> beam_search(const Tensor& enc,
                                                                   const ModelWeights& model,
                                                                   int beam_width = 5) {
  if (beam_width < 1) throw ArgError("beam_search: beam width must be >= 1");
  const int64_t d = enc.cols();
  const float ninf = -std::numeric_limits<float>::infinity();

  using Beam = std::map<std::vector<int>, Hypothesis>;
  Beam finished;  // hypotheses that consumed all frames seen so far
  {
    Hypothesis root;
    root.pred_state = PredictorState::zero(model.predictor);
    auto [g, st] = predictor_step(root.pred_state, kBlank, model.predictor);
    root.pred_out = std::move(g);
    root.pred_state = std::move(st);
    finished.emplace(std::vector<int>{}, std::move(root));
  }

  Tensor ft({d});
  for (int64_t t = 0; t < enc.rows(); ++t) {
    std::copy(enc.row_ptr(t), enc.row_ptr(t) + d, ft.data.begin());
    Beam active = std::move(finished);
    finished.clear();
    // Generous guard against degenerate non-blank loops.
    int pops = beam_width * (kMaxSymbolsPerFrame + 1) * 8;
    while (!active.empty() && pops-- > 0) {
      auto best_it = active.begin();
      for (auto it = std::next(active.begin()); it != active.end(); ++it)
        if (it->second.log_prob > best_it->second.log_prob) best_it = it;
      Hypothesis hyp = std::move(best_it->second);
      active.erase(best_it);

      // Frame done once beam_width finished hypotheses already outscore the
      // best still-active one (label extensions can only lower scores).
      if (static_cast<int>(finished.size()) >= beam_width) {
        int better = 0;
        for (const auto& [_, fh] : finished)
          if (fh.log_prob >= hyp.log_prob) ++better;
        if (better >= beam_width) break;
      }

      const Tensor logp = joint_step(ft, hyp.pred_out, model.joint_out);
      // Blank: the hypothesis moves on to the next frame.
      {
        auto [it, inserted] = finished.emplace(hyp.tokens, hyp);
        const float score = hyp.log_prob + logp.data[kBlank];
        it->second.log_prob = inserted ? score : log_sum_exp(it->second.log_prob, score);
      }
      // Labels: extended prefixes stay on this frame.
      for (int k = 1; k <= model.vocab_size; ++k) {
        const float score = hyp.log_prob + logp.data[static_cast<size_t>(k)];
        std::vector<int> ext = hyp.tokens;
        ext.push_back(k);
        auto it = active.find(ext);
        if (it != active.end()) {
          it->second.log_prob = log_sum_exp(it->second.log_prob, score);
        } else {
          Hypothesis nh;
          nh.tokens = std::move(ext);
          nh.log_prob = score;
          auto [g, st] = predictor_step(hyp.pred_state, k, model.predictor);
          nh.pred_out = std::move(g);
          nh.pred_state = std::move(st);
          active.emplace(nh.tokens, std::move(nh));
        }
      }
    }
    // Prune to the beam.
    if (static_cast<int>(finished.size()) > beam_width) {
      std::vector<float> scores;
      for (const auto& [_, h] : finished) scores.push_back(h.log_prob);
      std::nth_element(scores.begin(), scores.begin() + (beam_width - 1), scores.end(),
                       std::greater<float>());
      const float cut = scores[static_cast<size_t>(beam_width - 1)];
      int kept = 0;
      for (auto it = finished.begin(); it != finished.end();) {
        if (it->second.log_prob > cut || (it->second.log_prob == cut && kept < beam_width)) {
          if (it->second.log_prob == cut) ++kept;
          ++it;
        } else {
          it = finished.erase(it);
        }
      }
    }
    (void)ninf;
  }

  std::vector<std::pair<std::vector<int>, float>> result;
  for (const auto& [tokens, h] : finished) result.emplace_back(tokens, h.log_prob);
  std::sort(result.begin(), result.end(),
            [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<int>(result.size()) > beam_width)
    result.resize(static_cast<size_t>(beam_width));
  return result;
}

// Exhaustive argmax over every label sequence up to max_len, scored by the
// exact forward probability. Desk-scale only; refuses infeasible enumerations.
// Ties break to the lexicographically smaller sequence (shorter prefix first).
inline std::pair<std::vector<int>, double> oracle_decode(const Tensor& enc,
                                                         const ModelWeights& model,
                                                         int max_len) {
  double total = 0.0, pw = 1.0;
  for (int u = 0; u <= max_len; ++u, pw *= model.vocab_size) total += pw;
  if (total > 1e6) throw ArgError("oracle_decode: enumeration too large");

  std::vector<int> best_seq;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<int> seq;
  // Lexicographic DFS: the empty prefix and then extensions in label order,
  // so the first strictly-better candidate wins ties naturally.
  auto visit = [&](auto&& self) -> void {
    const double score = transducer_forward_logprob(enc, seq, model);
    if (score > best_score) {
      best_score = score;
      best_seq = seq;
    }
    if (static_cast<int>(seq.size()) == max_len) return;
    for (int k = 1; k <= model.vocab_size; ++k) {
      seq.push_back(k);
      self(self);
      seq.pop_back();
    }
  };
  visit(visit);
  return {best_seq, best_score};
}

}  // namespace ttx
