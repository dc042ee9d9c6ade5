#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nhalf.hpp"

namespace nhalf::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

namespace detail {

inline void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << "error=" << kind << " message=" << std::quoted(message) << '\n';
}

inline std::size_t resolve_threads(std::optional<std::size_t> flag) {
  if (flag && *flag > 0) return *flag;
  if (const char* env = std::getenv("NHALF_THREADS")) {
    std::int64_t n = 0;
    if (nhalf::detail::parse_int(env, n) && n > 0) return static_cast<std::size_t>(n);
  }
  return default_thread_count();
}

inline void print_bitwidths(std::ostream& out, const BitWidthReport& r) {
  for (std::size_t i = 0; i < r.blocks.size(); ++i) {
    const auto& b = r.blocks[i];
    out << "block" << i + 1 << ".accumulator_bits=" << b.accumulator_bits << '\n'
        << "block" << i + 1 << ".stored_activation_bits=" << b.stored_activation_bits << '\n'
        << "block" << i + 1 << ".threshold_bits=" << b.threshold_bits << '\n';
  }
  out << "score_bits=" << r.score_bits << '\n'
      << "stored_activation_bits=" << r.max_stored_activation_bits() << '\n'
      << "threshold_bits=" << r.max_threshold_bits() << '\n'
      << "float_op_count=" << r.float_op_count << '\n';
}

inline void print_storage(std::ostream& out, const StorageReport& s, const std::string& prefix = "") {
  out << std::fixed << std::setprecision(4);
  out << prefix << "params=" << s.params << '\n'
      << prefix << "binary_bytes=" << s.binary_bytes << '\n'
      << prefix << "binary_kb=" << s.binary_kb << '\n'
      << prefix << "float32_bytes=" << s.float32_bytes << '\n'
      << prefix << "int8_bytes=" << s.int8_bytes << '\n'
      << prefix << "float32_ratio=" << s.float32_ratio << '\n'
      << prefix << "int8_ratio=" << s.int8_ratio << '\n';
  if (s.threshold_entries) {
    out << prefix << "threshold_entries=" << s.threshold_entries << '\n'
        << prefix << "threshold_bytes_min=" << s.threshold_bytes_min << '\n'
        << prefix << "threshold_bytes_stored=" << s.threshold_bytes_stored << '\n'
        << prefix << "intermediate_elements=" << s.intermediate_elements << '\n'
        << prefix << "intermediate_bytes_clipped=" << s.intermediate_bytes_clipped << '\n'
        << prefix << "intermediate_bytes_unclipped=" << s.intermediate_bytes_unclipped << '\n';
  }
  out << prefix << "intermediate_bits_clipped=" << s.intermediate_bits_clipped << '\n'
      << prefix << "intermediate_bits_unclipped=" << s.intermediate_bits_unclipped << '\n'
      << prefix << "intermediate_ratio=" << s.intermediate_ratio << '\n';
  out << std::defaultfloat << std::setprecision(6);
}

inline std::vector<std::filesystem::path> collect_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("image directory not found: " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && nhalf::detail::is_image_file(e.path())) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  return paths;
}

}  // namespace detail

// ============================================================================
// Subcommands
// ============================================================================

inline int cmd_compile(const std::string& ckpt_path, const std::string& out_path, std::optional<int> clip,
                       std::ostream& out, std::ostream& err) {
  if (!std::filesystem::exists(ckpt_path)) {
    detail::report_error(err, "input", "checkpoint not found: " + ckpt_path);
    return kUsage;
  }
  const Checkpoint ck = load_checkpoint(ckpt_path);
  CompileOptions opts;
  opts.clip = clip;
  CompileDiagnostics diag;
  const FusedModel m = compile(ck, opts, &diag);
  save_fused(m, out_path);
  for (const auto& w : diag.warnings) err << "warning: " << w << '\n';
  for (const auto& t : diag.ties)
    err << "tie block=" << t.block << " channel=" << t.channel << " x=" << t.x << " value=" << t.value << '\n';
  out << "model=" << out_path << '\n' << "clip=" << m.config.clip << '\n'
      << "weight_bits=" << m.weight_bits() << '\n' << "boundary_ties=" << diag.ties.size() << '\n';
  detail::print_bitwidths(out, m.bitwidths);
  return kOk;
}

inline int cmd_infer(const std::string& model_path, const std::vector<std::string>& images, std::ostream& out,
                     std::ostream& err) {
  if (images.empty()) {
    detail::report_error(err, "usage", "no images given");
    return kUsage;
  }
  const FusedModel m = load_fused(model_path);
  const PreprocessConfig pre = preprocess_for(m);
  std::size_t ok = 0;
  out << "path,predicted,top1_class,top1_score,top2_class,top2_score,top3_class,top3_score\n";
  for (const auto& p : images) {
    try {
      const ClassScores s = forward_fused(m, preprocess(load_image(p), pre));
      const auto rank = s.ranking();
      out << p << ',' << s.predicted;
      for (std::size_t k = 0; k < 3; ++k) {
        if (k < rank.size())
          out << ',' << rank[k] << ',' << s.scores[rank[k]];
        else
          out << ",,";
      }
      out << '\n';
      ++ok;
    } catch (const Error& e) {
      err << "error=" << e.kind() << " path=" << std::quoted(p) << " message=" << std::quoted(e.what()) << '\n';
    }
  }
  return ok == 0 ? kFailure : kOk;
}

inline int cmd_eval(const std::string& model_path, const std::string& dataset, const std::string& confusion_out,
                    std::size_t threads, std::ostream& out, std::ostream& err) {
  if (!std::filesystem::exists(dataset)) {
    detail::report_error(err, "input", "manifest not found: " + dataset);
    return kUsage;
  }
  const FusedModel m = load_fused(model_path);
  const auto rows = load_dataset(dataset);
  const EvalResult r = evaluate(m, rows, preprocess_for(m), threads);
  for (const auto& e : r.errors)
    err << "error=row row=" << e.row << " path=" << std::quoted(e.path) << " message=" << std::quoted(e.message) << '\n';
  out << "samples=" << r.total << '\n'
      << "correct=" << r.correct << '\n'
      << "skipped=" << r.skipped << '\n'
      << "accuracy=" << std::fixed << std::setprecision(6) << r.accuracy() << std::defaultfloat << '\n'
      << "float_ops=" << r.counters.float_ops << '\n';
  if (!confusion_out.empty()) {
    std::ofstream f(confusion_out);
    if (!f) throw InputError("cannot write " + confusion_out);
    f << "label";
    for (std::size_t c = 0; c < r.class_count; ++c) f << ',' << c;
    f << '\n';
    for (std::size_t l = 0; l < r.class_count; ++l) {
      f << l;
      for (std::size_t c = 0; c < r.class_count; ++c) f << ',' << r.at(l, c);
      f << '\n';
    }
  }
  return r.total == 0 ? kFailure : kOk;
}

inline int cmd_inspect(const std::string& path, std::optional<std::uint64_t> params_override, std::ostream& out,
                       std::ostream& err) {
  if (!std::filesystem::exists(path)) {
    detail::report_error(err, "input", "file not found: " + path);
    return kUsage;
  }
  const Bytes data = read_file(path);
  FusedModel m;
  std::string kind;
  if (data.size() >= 4 && std::equal(data.begin(), data.begin() + 4, kFusedMagic)) {
    m = deserialize_fused(data);
    kind = "fused";
  } else if (data.size() >= 4 && std::equal(data.begin(), data.begin() + 4, kCheckpointMagic)) {
    m = compile(deserialize_checkpoint(data));
    kind = "checkpoint";
  } else {
    detail::report_error(err, "format", "not a checkpoint or fused model: " + path);
    return kUsage;
  }
  const ParamCount pc = count_params(m.config);
  out << "kind=" << kind << '\n' << "clip=" << m.config.clip << '\n' << "class_count=" << m.config.class_count << '\n';
  for (std::size_t i = 0; i < pc.per_block.size(); ++i)
    out << "block" << i + 1 << ".params=" << pc.per_block[i] << '\n';
  out << "total_params=" << pc.total << '\n';
  detail::print_storage(out, storage_report(m.config, m.config.clip));
  if (params_override)
    detail::print_storage(out, storage_report(*params_override, m.config.clip), "at_params.");
  detail::print_bitwidths(out, m.bitwidths);
  const BitWidthReport unclipped = analyze_bitwidths(m.config, m.rule_table(), false);
  out << "unclipped.stored_activation_bits=" << unclipped.max_stored_activation_bits() << '\n';
  return kOk;
}

inline int cmd_stats(const std::string& model_path, const std::string& ckpt_path, const std::string& images,
                     const std::string& out_path, std::ostream& out, std::ostream& err) {
  if (!std::filesystem::exists(ckpt_path)) {
    detail::report_error(err, "input", "checkpoint not found: " + ckpt_path);
    return kUsage;
  }
  const FusedModel m = load_fused(model_path);
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const PreprocessConfig pre = preprocess_for(m);
  std::vector<BitTensor> samples;
  for (const auto& p : detail::collect_images(images)) {
    try {
      samples.push_back(preprocess(load_image(p), pre));
    } catch (const Error& e) {
      err << "error=" << e.kind() << " path=" << std::quoted(p.string()) << " message=" << std::quoted(e.what()) << '\n';
    }
  }
  if (samples.empty()) {
    detail::report_error(err, "input", "no readable images in " + images);
    return kUsage;
  }
  const DistributionStats stats = distribution_stats(m, ck, samples);
  if (out_path.empty()) {
    write_stats_csv(out, stats);
  } else {
    std::ofstream f(out_path);
    if (!f) throw InputError("cannot write " + out_path);
    write_stats_csv(f, stats);
  }
  return kOk;
}

// Synthetic checkpoints stand in for a trainer export in smoke tests.
inline int cmd_synth(const std::string& out_path, std::uint64_t seed, bool identity, const std::string& arch_path,
                     std::ostream& out, std::ostream& err) {
  ArchitectureConfig cfg = default_config();
  if (!arch_path.empty()) {
    if (!std::filesystem::exists(arch_path)) {
      detail::report_error(err, "input", "architecture file not found: " + arch_path);
      return kUsage;
    }
    const Bytes text = read_file(arch_path);
    try {
      cfg = config_from_json(nlohmann::json::parse(text.begin(), text.end()));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("architecture file is not valid: ") + e.what());
    }
  }
  const Checkpoint ck = identity ? identity_checkpoint(cfg, seed) : random_checkpoint(cfg, seed);
  save_checkpoint(ck, out_path);
  out << "checkpoint=" << out_path << '\n' << "params=" << count_params(cfg).total << '\n';
  return kOk;
}

// ============================================================================
// Entry point
// ============================================================================

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Integer-only N+Half binary network compiler and inference engine", "nhalf"};
  app.require_subcommand(1);
  std::optional<std::size_t> threads;
  app.add_option("--threads", threads, "Worker threads (default: NHALF_THREADS or all cores)");

  std::string ckpt, model, output, dataset, images_dir, confusion, stats_out, inspect_path;
  std::optional<int> clip;
  std::optional<std::uint64_t> params_override;
  std::vector<std::string> images;

  std::uint64_t seed = 0;
  bool identity = false;
  std::string arch_path;
  auto* sy = app.add_subcommand("synth", "Write a synthetic checkpoint (random or identity parameters)");
  sy->add_option("-o,--output", output, "Checkpoint path (NHB1)")->required();
  sy->add_option("--seed", seed, "RNG seed");
  sy->add_flag("--identity", identity, "Identity BatchNorm/PReLU parameters");
  sy->add_option("--arch", arch_path, "Architecture JSON (default: built-in six-block layout)");

  auto* c = app.add_subcommand("compile", "Fuse a checkpoint into an integer-only model");
  c->add_option("checkpoint", ckpt, "Checkpoint (NHB1)")->required();
  c->add_option("-o,--output", output, "Fused model path (NHF1)")->required();
  c->add_option("--clip", clip, "Override the HardTanh clip (default: checkpoint value)")
      ->check(CLI::PositiveNumber);

  auto* inf = app.add_subcommand("infer", "Classify images");
  inf->add_option("model", model, "Fused model")->required();
  inf->add_option("images", images, "Image files (PNG/PPM)");

  auto* ev = app.add_subcommand("eval", "Evaluate accuracy over a manifest or class directory");
  ev->add_option("model", model, "Fused model")->required();
  ev->add_option("manifest", dataset, "Manifest CSV or directory-per-class root")->required();
  ev->add_option("--out", confusion, "Write the confusion matrix CSV here");

  auto* ins = app.add_subcommand("inspect", "Report parameters, storage and bit widths");
  ins->add_option("path", inspect_path, "Fused model or checkpoint")->required();
  ins->add_option("--params", params_override, "Also account storage for this parameter count");

  auto* st = app.add_subcommand("stats", "Emit value/threshold distribution histograms as CSV");
  st->add_option("--model", model, "Fused model")->required();
  st->add_option("--checkpoint", ckpt, "Checkpoint the model was compiled from")->required();
  st->add_option("--images", images_dir, "Directory of sample images")->required();
  st->add_option("--out", stats_out, "CSV output path (default: stdout)");

  std::vector<const char*> argv{"nhalf"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    detail::report_error(err, "usage", e.what());
    return kUsage;
  }

  try {
    if (*sy) return cmd_synth(output, seed, identity, arch_path, out, err);
    if (*c) return cmd_compile(ckpt, output, clip, out, err);
    if (*inf) return cmd_infer(model, images, out, err);
    if (*ev) return cmd_eval(model, dataset, confusion, detail::resolve_threads(threads), out, err);
    if (*ins) return cmd_inspect(inspect_path, params_override, out, err);
    if (*st) return cmd_stats(model, ckpt, images_dir, stats_out, out, err);
  } catch (const InputError& e) {
    detail::report_error(err, e.kind(), e.what());
    return kUsage;
  } catch (const Error& e) {
    detail::report_error(err, e.kind(), e.what());
    return kFailure;
  } catch (const std::exception& e) {
    detail::report_error(err, "internal", e.what());
    return kFailure;
  }
  return kUsage;
}

}  // namespace nhalf::cli
