#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstring>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "ttx/model.hpp"
#include "ttx/stream.hpp"
#include "ttx/transducer.hpp"

namespace ttx {

inline constexpr double kFrameShiftSeconds = 0.030;

struct BenchRow {
  int chunk_batch = 1;  // chunks grouped per encoder call
  std::string history;  // "inf" or a frame count
  std::string arch;
  std::string precision;
  int workers = 1;
  double audio_seconds = 0.0;
  double compute_seconds = 0.0;  // wall time of the streaming+decode loop
  double encode_seconds = 0.0;   // summed encoder time across utterances
  double rtf = 0.0;
  double latency_p50_ms = 0.0;
  double latency_p95_ms = 0.0;
  double frame_cost_quartile_us[4] = {0, 0, 0, 0};
};

struct BenchResult {
  BenchRow row;
  std::vector<std::vector<int>> decoded;  // per utterance
};

inline std::string history_label(const MaskSpec& spec) {
  return spec.unbounded() ? "inf" : std::to_string(spec.history);
}

// Streams every utterance in blocks of `chunk_batch` chunks through the
// encoder plus an incremental greedy decoder, timing the compute loop only
// (no model load or file I/O). Workers parallelize across utterances; each
// worker owns its stream state and decoder.
inline BenchResult run_bench(const ModelWeights& model,
                             const std::vector<Tensor>& utterances, const MaskSpec& spec,
                             int chunk_batch, int workers) {
  if (utterances.empty()) throw ArgError("run_bench: empty corpus");
  if (chunk_batch < 1) throw ArgError("run_bench: chunk_batch must be >= 1");
  if (workers < 1) throw ArgError("run_bench: workers must be >= 1");
  const int block = chunk_batch * spec.chunk_size;

  BenchResult result;
  result.decoded.resize(utterances.size());
  std::vector<double> chunk_latency_ms;
  std::vector<double> quartile_time(4, 0.0);
  std::vector<int64_t> quartile_frames(4, 0);
  std::vector<std::vector<double>> worker_latencies(static_cast<size_t>(workers));
  std::vector<std::array<double, 4>> worker_qtime(static_cast<size_t>(workers),
                                                  {0, 0, 0, 0});
  std::vector<std::array<int64_t, 4>> worker_qframes(static_cast<size_t>(workers),
                                                     {0, 0, 0, 0});
  std::vector<double> worker_encode(static_cast<size_t>(workers), 0.0);
  std::atomic<size_t> next{0};

  using Clock = std::chrono::steady_clock;
  const auto wall_start = Clock::now();
  auto work = [&](int wid) {
    for (;;) {
      const size_t u = next.fetch_add(1);
      if (u >= utterances.size()) break;
      const Tensor& feats = utterances[u];
      const int64_t frames = feats.rows();
      StreamState stream = open_stream(model, spec);
      GreedyDecoder dec(model);
      for (int64_t s = 0; s < frames; s += block) {
        const int64_t n = std::min<int64_t>(block, frames - s);
        Tensor chunk({n, feats.cols()});
        std::memcpy(chunk.data.data(), feats.row_ptr(s),
                    sizeof(float) * static_cast<size_t>(n * feats.cols()));
        const auto t0 = Clock::now();
        const Tensor enc = stream.step_chunk(chunk);
        const auto t1 = Clock::now();
        dec.feed(enc);
        const auto t2 = Clock::now();
        const double enc_s = std::chrono::duration<double>(t1 - t0).count();
        const double tot_s = std::chrono::duration<double>(t2 - t0).count();
        worker_encode[static_cast<size_t>(wid)] += enc_s;
        worker_latencies[static_cast<size_t>(wid)].push_back(tot_s * 1e3);
        for (int64_t f = s; f < s + n; ++f) {
          const int q = std::min<int64_t>(3, f * 4 / frames);
          worker_qtime[static_cast<size_t>(wid)][static_cast<size_t>(q)] +=
              tot_s / static_cast<double>(n);
          ++worker_qframes[static_cast<size_t>(wid)][static_cast<size_t>(q)];
        }
      }
      result.decoded[u] = dec.tokens();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  const double wall = std::chrono::duration<double>(Clock::now() - wall_start).count();

  int64_t total_frames = 0;
  for (const Tensor& u : utterances) total_frames += u.rows();
  for (int w = 0; w < workers; ++w) {
    chunk_latency_ms.insert(chunk_latency_ms.end(), worker_latencies[static_cast<size_t>(w)].begin(),
                            worker_latencies[static_cast<size_t>(w)].end());
    for (int q = 0; q < 4; ++q) {
      quartile_time[static_cast<size_t>(q)] += worker_qtime[static_cast<size_t>(w)][static_cast<size_t>(q)];
      quartile_frames[static_cast<size_t>(q)] += worker_qframes[static_cast<size_t>(w)][static_cast<size_t>(q)];
    }
    result.row.encode_seconds += worker_encode[static_cast<size_t>(w)];
  }
  std::sort(chunk_latency_ms.begin(), chunk_latency_ms.end());
  auto pct = [&](double p) {
    if (chunk_latency_ms.empty()) return 0.0;
    const size_t i = std::min(chunk_latency_ms.size() - 1,
                              static_cast<size_t>(p * static_cast<double>(chunk_latency_ms.size())));
    return chunk_latency_ms[i];
  };

  BenchRow& row = result.row;
  row.chunk_batch = chunk_batch;
  row.history = history_label(spec);
  row.arch = arch_name(model.cfg.arch);
  row.precision = model.is_quantized() ? "int8" : "f32";
  row.workers = workers;
  row.audio_seconds = static_cast<double>(total_frames) * kFrameShiftSeconds;
  row.compute_seconds = wall;
  row.rtf = row.compute_seconds / row.audio_seconds;
  row.latency_p50_ms = pct(0.50);
  row.latency_p95_ms = pct(0.95);
  for (int q = 0; q < 4; ++q)
    row.frame_cost_quartile_us[q] =
        quartile_frames[static_cast<size_t>(q)] > 0
            ? quartile_time[static_cast<size_t>(q)] /
                  static_cast<double>(quartile_frames[static_cast<size_t>(q)]) * 1e6
            : 0.0;
  return result;
}

inline const char* bench_csv_header() {
  return "chunk_batch,history,arch,precision,workers,audio_seconds,compute_seconds,"
         "encode_seconds,rtf,latency_p50_ms,latency_p95_ms,"
         "frame_cost_q1_us,frame_cost_q2_us,frame_cost_q3_us,frame_cost_q4_us";
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << bench_csv_header() << "\n";
  for (const BenchRow& r : rows) {
    out << r.chunk_batch << ',' << r.history << ',' << r.arch << ',' << r.precision << ','
        << r.workers << ',' << r.audio_seconds << ',' << r.compute_seconds << ','
        << r.encode_seconds << ',' << r.rtf << ',' << r.latency_p50_ms << ','
        << r.latency_p95_ms;
    for (double q : r.frame_cost_quartile_us) out << ',' << q;
    out << "\n";
  }
}

}  // namespace ttx
