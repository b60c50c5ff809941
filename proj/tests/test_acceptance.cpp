// Acceptance gate: one test per release criterion, each printing a single
// pass/fail line so the run log doubles as the sign-off checklist.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ttx/bench.hpp"
#include "ttx/encoder.hpp"
#include "ttx/modelio.hpp"
#include "ttx/quantize.hpp"
#include "ttx/stream.hpp"
#include "ttx/transducer.hpp"

using ttx::Arch;
using ttx::EncoderConfig;
using ttx::MaskSpec;
using ttx::ModelWeights;
using ttx::Tensor;

namespace {

void report(int criterion, const std::string& what, bool pass) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
  std::fflush(stdout);
  EXPECT_TRUE(pass) << "criterion " << criterion << ": " << what;
}

EncoderConfig desk_config(Arch arch, int layers = 4, int d_model = 64) {
  EncoderConfig cfg;
  cfg.num_layers = layers;
  cfg.d_model = d_model;
  cfg.num_heads = 4;
  cfg.ffn_dim = 2 * d_model;
  cfg.input_dim = 8;
  cfg.arch = arch;
  cfg.conv_kernel = 3;
  return cfg;
}

EncoderConfig bench_config() {
  // Full-depth encoder at reduced width: 8 layers, d_model 256.
  EncoderConfig cfg;
  cfg.num_layers = 8;
  cfg.d_model = 256;
  cfg.num_heads = 4;
  cfg.ffn_dim = 256;
  cfg.input_dim = 8;
  cfg.arch = Arch::transformer;
  return cfg;
}

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.d_model = 8;
  cfg.num_heads = 2;
  cfg.ffn_dim = 16;
  cfg.input_dim = 4;
  return cfg;
}

}  // namespace

TEST(Acceptance, C1_StreamingOfflineEquivalence) {
  const auto start = std::chrono::steady_clock::now();
  float worst = 0.0f;
  for (Arch arch : {Arch::transformer, Arch::conformer}) {
    const ModelWeights model = ttx::random_init(desk_config(arch), 16, 1001);
    for (int c : {1, 2, 4, 8})
      for (int h : {0, 4, 12, ttx::kUnboundedHistory})
        for (int t : {7, 32, 64})
          worst = std::max(worst, ttx::verify_equivalence(model, MaskSpec{c, h}, t));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "streaming vs offline equivalence over C/H/T grid: max diff %.2e (tol 1e-4), "
                "%.1fs (< 30s)",
                worst, secs);
  report(1, buf, worst <= 1e-4f && secs < 30.0);
}

TEST(Acceptance, C2_MaskAndReceptionField) {
  // Exhaustive agreement with the three visibility rules.
  bool mask_ok = true;
  for (int t = 1; t <= 20 && mask_ok; ++t)
    for (int c = 1; c <= 5 && mask_ok; ++c)
      for (int h = -1; h <= 6 && mask_ok; ++h) {
        const MaskSpec spec{c, h};
        const ttx::MaskMatrix m = ttx::build_mask(spec, t);
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < t; ++j) {
            const bool same = i / c == j / c;
            const bool future = j / c > i / c;
            const bool hist = h < 0 || i - j <= h;
            if (m.at(i, j) != (same || (!future && hist))) mask_ok = false;
          }
      }

  // Reception-field closure vs. encoder perturbation probes, three configs.
  bool probe_ok = true;
  const struct {
    int c, h;
    uint64_t seed;
  } cases[] = {{3, 3, 11}, {2, 5, 12}, {4, 0, 13}};
  for (const auto& cs : cases) {
    EncoderConfig cfg = desk_config(Arch::transformer, 4, 32);
    const ModelWeights model = ttx::random_init(cfg, 4, cs.seed);
    const MaskSpec spec{cs.c, cs.h};
    const int frames = 12;
    const Tensor feats = ttx::synthetic_features(frames, cfg.input_dim, cs.seed);
    const Tensor base = ttx::encode_offline(feats, model, spec);
    for (int j = 0; j < frames; ++j) {
      Tensor fp = feats;
      for (int64_t d = 0; d < cfg.input_dim; ++d) fp.at(j, d) += 0.5f;
      const Tensor out = ttx::encode_offline(fp, model, spec);
      for (int t = 0; t < frames; ++t) {
        const auto reach = ttx::reachable_inputs(spec, cfg.num_layers, t, frames);
        bool changed = false;
        for (int64_t d = 0; d < cfg.d_model; ++d)
          if (base.at(t, d) != out.at(t, d)) changed = true;
        if (changed != (reach[static_cast<size_t>(j)] != 0)) probe_ok = false;
      }
    }
  }

  // Reference reception-field walk: C=3, H=3, the 10th frame (index 9):
  // left edges 6, 3, 0 across layers 1-3, right edge fixed at index 11.
  const MaskSpec fig{3, 3};
  const int left_want[3] = {6, 3, 0};
  bool fig_ok = true;
  for (int l = 1; l <= 3; ++l) {
    const ttx::ReceptionField rf = ttx::reception_field(fig, l, 9, 13);
    if (rf.left != left_want[l - 1] || rf.right != 11) fig_ok = false;
  }

  report(2, "mask rules exhaustive + reception-field probes + reference C=3/H=3 walk",
         mask_ok && probe_ok && fig_ok);
}

TEST(Acceptance, C3_ZeroLookaheadCausality) {
  bool ok = true;
  for (Arch arch : {Arch::transformer, Arch::conformer}) {
    EncoderConfig cfg = desk_config(arch);
    const ModelWeights model = ttx::random_init(cfg, 8, 1003);
    const MaskSpec spec{1, ttx::kUnboundedHistory};
    const int frames = 16;
    const Tensor feats = ttx::synthetic_features(frames, cfg.input_dim, 31);
    const Tensor base = ttx::encode_offline(feats, model, spec);
    for (int j = 1; j < frames; ++j) {
      Tensor fp = feats;
      for (int64_t d = 0; d < cfg.input_dim; ++d) fp.at(j, d) += 1.0f;
      const Tensor out = ttx::encode_offline(fp, model, spec);
      for (int t = 0; t < j; ++t)
        for (int64_t d = 0; d < cfg.d_model; ++d)
          if (base.at(t, d) != out.at(t, d)) ok = false;
    }
  }
  report(3, "C=1 causality: future-frame perturbations leave earlier outputs bitwise unchanged",
         ok);
}

TEST(Acceptance, C4_TransducerNormalization) {
  // Random model with the joint's blank bias shifted so the tail over long
  // label sequences vanishes; enumerate by increasing max length until the
  // residual falls below 1e-12.
  EncoderConfig cfg = tiny_config();
  ModelWeights m = ttx::random_init(cfg, 3, 1004);
  m.joint_out.b.data[ttx::kBlank] += 8.0f;
  std::mt19937 rng(41);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor enc({2, cfg.d_model});
  for (float& v : enc.data) v = dist(rng);

  double total = 0.0;
  double last_added = 1.0;
  int max_len = 0;
  for (; max_len <= 12 && last_added >= 1e-12; ++max_len) {
    // Sum over sequences of exactly `max_len` labels.
    double added = 0.0;
    std::vector<int> seq;
    auto visit = [&](auto&& self) -> void {
      if (static_cast<int>(seq.size()) == max_len) {
        added += std::exp(static_cast<double>(ttx::transducer_forward_logprob(enc, seq, m)));
        return;
      }
      for (int k = 1; k <= m.vocab_size; ++k) {
        seq.push_back(k);
        self(self);
        seq.pop_back();
      }
    };
    visit(visit);
    total += added;
    last_added = added;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "T=2 V=3 output distribution: total mass %.12f after length %d (tol 1e-9)",
                total, max_len - 1);
  report(4, buf, std::fabs(total - 1.0) < 1e-9 && last_added < 1e-12);
}

TEST(Acceptance, C5_DecoderExactness) {
  const int trials = 100;
  int agree = 0;
  bool score_ok = true, width_ok = true;
  for (int trial = 0; trial < trials; ++trial) {
    EncoderConfig cfg = tiny_config();
    const ModelWeights m = ttx::random_init(cfg, 4, 2000 + static_cast<uint64_t>(trial));
    std::mt19937 rng(static_cast<unsigned>(500 + trial));
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    Tensor enc({3, cfg.d_model});
    for (float& v : enc.data) v = dist(rng);

    const auto [oracle_seq, oracle_score] = ttx::oracle_decode(enc, m, 3);
    const auto b16 = ttx::beam_search(enc, m, 16);
    const auto b5 = ttx::beam_search(enc, m, 5);
    const auto b1 = ttx::beam_search(enc, m, 1);
    if (b16[0].first == oracle_seq) ++agree;
    if (b16[0].second > oracle_score + 1e-4f) score_ok = false;
    if (b5[0].second < b1[0].second - 1e-5f) width_ok = false;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "beam(16) = oracle in %d/100 (need >= 95), scores bounded by oracle: %s, "
                "beam(5) >= beam(1): %s",
                agree, score_ok ? "yes" : "no", width_ok ? "yes" : "no");
  report(5, buf, agree >= 95 && score_ok && width_ok);
}

TEST(Acceptance, C6_CacheBound) {
  const ModelWeights model = ttx::random_init(desk_config(Arch::transformer), 4, 1006);
  const MaskSpec spec{4, 12};
  ttx::StreamState stream = ttx::open_stream(model, spec);
  int64_t worst = 0;
  for (int s = 0; s < 10000; s += 4) {
    stream.step_chunk(ttx::synthetic_features(4, 8, static_cast<uint64_t>(s)));
    for (size_t l = 0; l < model.layers.size(); ++l)
      worst = std::max(worst, stream.cached_frames(l));
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "10,000 frames at C=4 H=12: max cached frames per layer %lld (<= 16)",
                static_cast<long long>(worst));
  report(6, buf, worst <= 16);
}

TEST(Acceptance, C7_RuntimeTrends) {
  ModelWeights model = ttx::random_init(bench_config(), 16, 1007);
  // A trained transducer is blank-dominated; bias the joint the same way so
  // the decode work interleaved with encoding is realistic.
  model.joint_out.b.data[ttx::kBlank] += 8.0f;

  // (a) History truncation: with unbounded history the per-frame encoder cost
  // grows along a long utterance; a 60-frame window keeps it flat.
  std::vector<Tensor> longutt;
  longutt.push_back(ttx::synthetic_features(2048, 8, 71));
  const ttx::BenchResult inf_run =
      ttx::run_bench(model, longutt, MaskSpec{1, ttx::kUnboundedHistory}, 1, 1);
  const ttx::BenchResult win_run = ttx::run_bench(model, longutt, MaskSpec{1, 60}, 1, 1);
  const double inf_ratio =
      inf_run.row.frame_cost_quartile_us[3] / inf_run.row.frame_cost_quartile_us[0];
  const double win_ratio =
      win_run.row.frame_cost_quartile_us[3] / win_run.row.frame_cost_quartile_us[0];
  {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "history truncation: last/first quartile frame cost %.2fx at H=inf "
                  "(>= 2x), %.2fx at H=60 (< 1.3x)",
                  inf_ratio, win_ratio);
    report(7, buf, inf_ratio >= 2.0 && win_ratio < 1.3);
  }

  // (b) Chunk batching at H=60: batching 15 chunks per encoder call must at
  // least halve total encode time, without changing the decoded tokens.
  std::vector<Tensor> corpus;
  for (int u = 0; u < 50; ++u)
    corpus.push_back(ttx::synthetic_features(128, 8, 800 + static_cast<uint64_t>(u)));
  const MaskSpec spec{1, 60};
  const ttx::BenchResult b1 = ttx::run_bench(model, corpus, spec, 1, 1);
  const ttx::BenchResult b15 = ttx::run_bench(model, corpus, spec, 15, 1);
  const double batch_ratio = b15.row.encode_seconds / b1.row.encode_seconds;
  {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "chunk batching: encode time b=15 / b=1 = %.2f (<= 0.5), decoded tokens "
                  "identical: %s",
                  batch_ratio, b15.decoded == b1.decoded ? "yes" : "no");
    report(7, buf, batch_ratio <= 0.5 && b15.decoded == b1.decoded);
  }

  // (c) INT8: quantized streaming no slower than float (loose bound; the
  // measured ratio is what matters for the report), and the quantized linear
  // kernel stays within 2% relative L2 of the float kernel.
  std::vector<Tensor> small_corpus(corpus.begin(), corpus.begin() + 16);
  const ttx::BenchResult f32 = ttx::run_bench(model, small_corpus, spec, 2, 1);
  const ModelWeights qmodel = ttx::quantize_model(model);
  const ttx::BenchResult int8 = ttx::run_bench(qmodel, small_corpus, spec, 2, 1);
  const double rtf_ratio = int8.row.rtf / f32.row.rtf;

  std::mt19937 rng(72);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor w({256, 256}), x({8, 256});
  for (float& v : w.data) v = dist(rng) / 16.0f;
  for (float& v : x.data) v = dist(rng);
  Tensor want({8, 256});
  for (int64_t r = 0; r < 8; ++r)
    for (int64_t o = 0; o < 256; ++o) {
      double acc = 0.0;
      for (int64_t i = 0; i < 256; ++i) acc += w.at(o, i) * x.at(r, i);
      want.at(r, o) = static_cast<float>(acc);
    }
  const Tensor got = ttx::int8_linear(x, ttx::quantize_tensor(w), Tensor());
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < got.numel(); ++i) {
    const double d = got.data[static_cast<size_t>(i)] - want.data[static_cast<size_t>(i)];
    num += d * d;
    den += want.data[static_cast<size_t>(i)] * want.data[static_cast<size_t>(i)];
  }
  const double l2 = std::sqrt(num / den);
  {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "int8: RTF ratio int8/f32 = %.2f (<= 1.05), 256x256 linear rel L2 error "
                  "%.4f (< 0.02)",
                  rtf_ratio, l2);
    report(7, buf, rtf_ratio <= 1.05 && l2 < 0.02);
  }
}

TEST(Acceptance, C8_FileFormatFidelity) {
  const std::string cpath = testing::TempDir() + "ttx_accept_fuzz.ttckpt";
  const std::string fpath = testing::TempDir() + "ttx_accept_fuzz.ttfeat";
  EncoderConfig cfg = tiny_config();
  ModelWeights m = ttx::random_init(cfg, 4, 1008);
  ttx::save_checkpoint(m, cpath);
  ttx::write_features(ttx::synthetic_features(12, cfg.input_dim, 81), fpath);

  // Roundtrips are bit-identical.
  ModelWeights loaded = ttx::load_checkpoint(cpath);
  const std::string cpath2 = cpath + ".again";
  ttx::save_checkpoint(loaded, cpath2);
  const std::vector<char> a = ttx::read_file_bytes(cpath);
  const std::vector<char> b = ttx::read_file_bytes(cpath2);
  const bool ckpt_roundtrip = a == b;
  const Tensor feats = ttx::read_features(fpath);
  ttx::write_features(feats, fpath + ".again");
  const bool feat_roundtrip =
      ttx::read_file_bytes(fpath) == ttx::read_file_bytes(fpath + ".again");

  // 1,000 mutated headers: every load either succeeds or throws FormatError.
  std::mt19937_64 rng(82);
  const std::vector<char> good_c = ttx::read_file_bytes(cpath);
  const std::vector<char> good_f = ttx::read_file_bytes(fpath);
  bool fuzz_ok = true;
  int mutations = 0;
  auto fuzz = [&](const std::vector<char>& good, const std::string& path, bool is_ckpt,
                  int rounds) {
    for (int i = 0; i < rounds; ++i) {
      std::vector<char> bad = good;
      const size_t span = std::min<size_t>(bad.size(), 2048);
      const int flips = 1 + static_cast<int>(rng() % 3);
      for (int f = 0; f < flips; ++f) bad[rng() % span] = static_cast<char>(rng() & 0xff);
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
      out.close();
      ++mutations;
      try {
        if (is_ckpt)
          ttx::load_checkpoint(path);
        else
          ttx::read_features(path);
      } catch (const ttx::FormatError&) {
        // typed rejection: fine
      } catch (...) {
        fuzz_ok = false;
      }
    }
  };
  fuzz(good_c, cpath, true, 600);
  fuzz(good_f, fpath, false, 400);

  std::remove(cpath.c_str());
  std::remove((cpath + ".again").c_str());
  std::remove(fpath.c_str());
  std::remove((fpath + ".again").c_str());
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "roundtrips bit-identical (ckpt %s, features %s); %d mutated headers, all "
                "typed errors",
                ckpt_roundtrip ? "yes" : "no", feat_roundtrip ? "yes" : "no", mutations);
  report(8, buf, ckpt_roundtrip && feat_roundtrip && fuzz_ok && mutations == 1000);
}

TEST(Acceptance, C9_ParameterCount) {
  EncoderConfig cfg;
  cfg.num_layers = 18;
  cfg.d_model = 720;
  cfg.num_heads = 8;
  cfg.ffn_dim = 1024;
  cfg.input_dim = 640;
  cfg.arch = Arch::transformer;
  const ModelWeights m = ttx::make_model(cfg, 4000);
  const int64_t n = ttx::param_count(m);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "full-scale config: %.1fM parameters (within 60M..100M, i.e. 80M +/- 25%%)",
                static_cast<double>(n) / 1e6);
  report(9, buf, n >= 60000000 && n <= 100000000);
}
