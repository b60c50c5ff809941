// ttx: streaming transformer-transducer inference CLI.
//
// Subcommands: init, decode, bench, mask-report, verify, quantize, synth.
// Exit codes: 0 success, 1 verification failure, 2 usage/input error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttx/bench.hpp"
#include "ttx/encoder.hpp"
#include "ttx/mask.hpp"
#include "ttx/modelio.hpp"
#include "ttx/quantize.hpp"
#include "ttx/stream.hpp"
#include "ttx/transducer.hpp"

namespace fs = std::filesystem;

namespace {

int parse_history(const std::string& s) {
  if (s == "inf" || s == "-1") return ttx::kUnboundedHistory;
  const int h = std::stoi(s);
  if (h < 0) return ttx::kUnboundedHistory;
  return h;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

int cmd_init(const std::string& config_path, uint64_t seed, const std::string& out_path) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot open config " << config_path << "\n";
    return 2;
  }
  nlohmann::json j;
  in >> j;
  auto [cfg, vocab] = ttx::config_from_json(j);
  const ttx::ModelWeights model = ttx::random_init(cfg, vocab, seed);
  ttx::save_checkpoint(model, out_path);
  std::cout << "wrote " << out_path << " (" << ttx::param_count(model) << " parameters, "
            << ttx::arch_name(cfg.arch) << ", " << cfg.num_layers << " layers)\n";
  return 0;
}

int cmd_decode(const std::string& model_path, const std::string& features_path, int chunk,
               const std::string& history, int beam, const std::string& mode) {
  const ttx::ModelWeights model = ttx::load_checkpoint(model_path);
  const ttx::Tensor feats = ttx::read_features(features_path);
  ttx::MaskSpec spec{chunk, parse_history(history)};

  ttx::StreamState stream = ttx::open_stream(model, spec);
  std::vector<ttx::Tensor> enc_chunks;
  for (int64_t s = 0; s < feats.rows(); s += chunk) {
    const int64_t n = std::min<int64_t>(chunk, feats.rows() - s);
    ttx::Tensor block({n, feats.cols()});
    std::memcpy(block.data.data(), feats.row_ptr(s),
                sizeof(float) * static_cast<size_t>(n * feats.cols()));
    enc_chunks.push_back(stream.step_chunk(block));
  }
  ttx::Tensor enc({feats.rows(), model.cfg.d_model});
  int64_t r = 0;
  for (const ttx::Tensor& c : enc_chunks) {
    std::memcpy(enc.row_ptr(r), c.data.data(), sizeof(float) * c.data.size());
    r += c.rows();
  }

  const std::string utt_id = fs::path(features_path).stem().string();
  std::vector<int> tokens;
  float logprob = 0.0f;
  if (mode == "beam") {
    const auto nbest = ttx::beam_search(enc, model, beam);
    tokens = nbest.front().first;
    logprob = nbest.front().second;
  } else {
    tokens = ttx::greedy_decode(enc, model);
    logprob = ttx::transducer_forward_logprob(enc, tokens, model);
  }
  std::cout << utt_id << '\t';
  for (size_t i = 0; i < tokens.size(); ++i) std::cout << (i ? " " : "") << tokens[i];
  std::cout << '\t' << logprob << "\n";
  return 0;
}

int cmd_bench(const std::string& model_path, const std::string& features_dir,
              const std::string& chunks, const std::string& history, int mask_chunk,
              int workers, const std::string& precision, const std::string& out_path) {
  ttx::ModelWeights model = ttx::load_checkpoint(model_path);
  if (precision == "int8" && !model.is_quantized()) model = ttx::quantize_model(model);

  std::vector<ttx::Tensor> corpus;
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(features_dir))
    if (e.path().extension() == ".ttfeat") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) corpus.push_back(ttx::read_features(p.string()));
  if (corpus.empty()) {
    std::cerr << "error: no .ttfeat files in " << features_dir << "\n";
    return 2;
  }

  const ttx::MaskSpec spec{mask_chunk, parse_history(history)};
  std::vector<ttx::BenchRow> rows;
  for (int b : parse_int_list(chunks)) {
    const ttx::BenchResult res = ttx::run_bench(model, corpus, spec, b, workers);
    rows.push_back(res.row);
    std::cout << "b=" << b << " rtf=" << std::fixed << std::setprecision(4) << res.row.rtf
              << " p50=" << res.row.latency_p50_ms << "ms p95=" << res.row.latency_p95_ms
              << "ms\n";
  }
  std::ofstream out(out_path);
  ttx::write_bench_csv(rows, out);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_mask_report(int chunk, const std::string& history, int frames, int layers) {
  const ttx::MaskSpec spec{chunk, parse_history(history)};
  const ttx::MaskMatrix m = ttx::build_mask(spec, frames);
  std::cout << "mask matrix M (" << frames << "x" << frames << "), chunk=" << chunk
            << " history=" << history << " (frame indices are 0-based)\n";
  for (int i = 0; i < frames; ++i) {
    for (int j = 0; j < frames; ++j) std::cout << (m.at(i, j) ? '1' : '0');
    std::cout << "\n";
  }
  std::cout << "\nper-frame lookahead:";
  for (int i = 0; i < frames; ++i) {
    const int chunk_end = std::min(frames - 1, spec.chunk_start(i) + chunk - 1);
    std::cout << ' ' << (chunk_end - i);
  }
  std::cout << "\naverage lookahead (full chunk): " << ttx::avg_lookahead(spec) << " frames ("
            << ttx::avg_lookahead(spec) * ttx::kFrameShiftSeconds * 1e3 << " ms)\n";
  std::cout << "\nreception fields (frame: left..right per layer)\n";
  for (int t = 0; t < frames; ++t) {
    std::cout << "frame " << t << ':';
    for (int l = 1; l <= layers; ++l) {
      const ttx::ReceptionField rf = ttx::reception_field(spec, l, t, frames);
      std::cout << "  L" << l << ' ' << rf.left << ".." << rf.right;
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_verify(const std::string& model_path, int frames, int chunk,
               const std::string& history, double tol, bool corrupt_cache) {
  const ttx::ModelWeights model = ttx::load_checkpoint(model_path);
  const ttx::MaskSpec spec{chunk, parse_history(history)};
  const float diff = ttx::verify_equivalence(model, spec, frames, corrupt_cache);
  std::cout << "max abs streaming/offline difference: " << diff << " (tol " << tol << ")\n";
  return diff <= tol ? 0 : 1;
}

int cmd_quantize(const std::string& model_path, const std::string& out_path) {
  const ttx::ModelWeights model = ttx::load_checkpoint(model_path);
  if (model.is_quantized()) {
    std::cerr << "error: input checkpoint is already quantized\n";
    return 2;
  }
  const auto report = ttx::quantize_error_report(model);
  const ttx::ModelWeights q = ttx::quantize_model(model);
  ttx::save_checkpoint(q, out_path);
  const auto in_size = fs::file_size(model_path);
  const auto out_size = fs::file_size(out_path);
  std::cout << "size ratio: " << static_cast<double>(out_size) / static_cast<double>(in_size)
            << " (" << out_size << " / " << in_size << " bytes)\n";
  float worst = 0.0f;
  std::string worst_name;
  for (const auto& e : report) {
    if (e.rel() > worst) {
      worst = e.rel();
      worst_name = e.name;
    }
  }
  std::cout << "per-tensor max relative error: worst " << worst << " (" << worst_name << ")\n";
  return 0;
}

int cmd_synth(const std::string& out_dir, int utts, int frames, int dim, uint64_t seed) {
  fs::create_directories(out_dir);
  for (int u = 0; u < utts; ++u) {
    const ttx::Tensor x = ttx::synthetic_features(frames, dim, seed + static_cast<uint64_t>(u));
    std::ostringstream name;
    name << "utt" << std::setw(4) << std::setfill('0') << u << ".ttfeat";
    ttx::write_features(x, (fs::path(out_dir) / name.str()).string());
  }
  std::cout << "wrote " << utts << " feature files to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming transformer-transducer inference engine"};
  app.require_subcommand(1);

  std::string config_path, model_path, features, out_path, history = "inf";
  std::string mode = "greedy", precision = "f32", chunks = "1,2,5,10,15";
  uint64_t seed = 1;
  int chunk = 1, beam = 5, frames = 64, layers = 3, workers = 1, mask_chunk = 1;
  int utts = 50, dim = 8;
  double tol = 1e-4;
  bool corrupt_cache = false;

  auto* init = app.add_subcommand("init", "write a random-initialized checkpoint");
  init->add_option("--config", config_path, "model config JSON")->required();
  init->add_option("--seed", seed, "RNG seed");
  init->add_option("--out", out_path, "output checkpoint path")->required();

  auto* decode = app.add_subcommand("decode", "stream features chunk-wise and decode");
  decode->add_option("--model", model_path)->required();
  decode->add_option("--features", features, "feature file (.ttfeat)")->required();
  decode->add_option("--chunk", chunk, "chunk size C in frames");
  decode->add_option("--history", history, "history window H in frames, or 'inf'");
  decode->add_option("--beam", beam, "n-best width for beam mode");
  decode->add_option("--mode", mode)->check(CLI::IsMember({"greedy", "beam"}));

  auto* bench = app.add_subcommand("bench", "RTF benchmark over a feature corpus");
  bench->add_option("--model", model_path)->required();
  bench->add_option("--features", features, "directory of .ttfeat files")->required();
  bench->add_option("--chunks", chunks, "comma list of chunk batch sizes");
  bench->add_option("--history", history, "history window H, or 'inf'");
  bench->add_option("--mask-chunk", mask_chunk, "mask chunk size C (default 1, zero lookahead)");
  bench->add_option("--workers", workers, "utterance-parallel workers");
  bench->add_option("--precision", precision)->check(CLI::IsMember({"f32", "int8"}));
  bench->add_option("--out", out_path, "CSV report path")->required();

  auto* mask = app.add_subcommand("mask-report", "print mask, lookahead, reception fields");
  mask->add_option("--chunk", chunk)->required();
  mask->add_option("--history", history)->required();
  mask->add_option("--frames", frames);
  mask->add_option("--layers", layers);

  auto* verify = app.add_subcommand("verify", "streaming vs offline equivalence check");
  verify->add_option("--model", model_path)->required();
  verify->add_option("--frames", frames);
  verify->add_option("--chunk", chunk);
  verify->add_option("--history", history);
  verify->add_option("--tol", tol);
  verify->add_flag("--corrupt-cache", corrupt_cache)->group("");  // test hook

  auto* quant = app.add_subcommand("quantize", "write an INT8 checkpoint");
  quant->add_option("--model", model_path)->required();
  quant->add_option("--out", out_path)->required();

  auto* synth = app.add_subcommand("synth", "generate synthetic feature files");
  synth->add_option("--out", out_path)->required();
  synth->add_option("--utts", utts);
  synth->add_option("--frames", frames);
  synth->add_option("--dim", dim);
  synth->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (init->parsed()) return cmd_init(config_path, seed, out_path);
    if (decode->parsed()) return cmd_decode(model_path, features, chunk, history, beam, mode);
    if (bench->parsed())
      return cmd_bench(model_path, features, chunks, history, mask_chunk, workers, precision,
                       out_path);
    if (mask->parsed()) return cmd_mask_report(chunk, history, frames, layers);
    if (verify->parsed())
      return cmd_verify(model_path, frames, chunk, history, tol, corrupt_cache);
    if (quant->parsed()) return cmd_quantize(model_path, out_path);
    if (synth->parsed())
      return cmd_synth(out_path, utts, frames, dim, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
