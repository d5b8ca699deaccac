#include "rtkd/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "rtkd/checkpoint.hpp"
#include "rtkd/errors.hpp"
#include "rtkd/eval.hpp"
#include "rtkd/io.hpp"
#include "rtkd/keyvalue.hpp"
#include "rtkd/settings.hpp"
#include "rtkd/tracking.hpp"

namespace rtkd {

namespace fs = std::filesystem;

namespace {

// --- gen-data -------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::string scenario = "switching";
  Index frames = 64;
  Index seqs = 8;
  std::uint64_t seed = 0;
  Index size = 64;
  double noise = 0.02;
};

void cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  std::vector<ScenarioKind> kinds;
  if (a.scenario == "mixed") {
    kinds = all_scenarios();
  } else {
    try {
      kinds = {parse_scenario(a.scenario)};
    } catch (const UsageError& e) {
      throw UsageError(std::string(e.what()) + "; or 'mixed' to cycle through all of them");
    }
  }
  if (a.seqs < 1) throw UsageError("--seqs must be at least 1");
  const Rng root(a.seed);
  for (Index i = 0; i < a.seqs; ++i) {
    ScenarioSpec spec;
    spec.kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03lld", scenario_name(spec.kind), static_cast<long long>(i));
    spec.name = name;
    spec.frames = a.frames;
    spec.height = a.size;
    spec.width = a.size;
    spec.noise = a.noise;
    spec.seed = root.fork(static_cast<std::uint64_t>(i)).next_u64();
    const Sequence seq = generate_sequence(spec);
    write_sequence(fs::path(a.out) / spec.name, seq);
    out << spec.name << " frames=" << seq.meta.num_frames << " size=" << seq.meta.width << "x"
        << seq.meta.height << " attributes=";
    for (std::size_t k = 0; k < seq.meta.attributes.size(); ++k) out << (k ? "," : "") << seq.meta.attributes[k];
    out << "\n";
  }
  out << "wrote " << a.seqs << " sequences to " << a.out << "\n";
}

// --- training -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string teacher;
  std::vector<std::string> overrides;
  bool no_prompter = false;
  bool no_spatial = false;
  bool no_token = false;
  bool no_history = false;
  bool no_response_kd = false;
  bool no_feature_kd = false;
};

RunConfig resolve_config(LoopKind loop, const TrainArgs& a) {
  std::map<std::string, std::string> values;
  std::string source = "defaults";
  if (!a.config.empty()) {
    source = a.config;
    values = parse_key_values(read_file(a.config), a.config);
  }
  for (const std::string& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    values[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (a.no_prompter) values["prompter"] = "false";
  if (a.no_spatial) values["spatial_attn"] = "false";
  if (a.no_token) values["token_attn"] = "false";
  if (a.no_history) values["history"] = "false";
  if (a.no_response_kd) values["lambda_rm"] = "0";
  if (a.no_feature_kd) values["lambda_mf"] = "0";
  RunConfig cfg = run_config_from(loop, std::move(values), source);
  cfg.train.validate(loop);
  return cfg;
}

void report_trace(const std::vector<TraceRow>& trace, std::ostream& out) {
  std::map<Index, std::pair<double, Index>> per_epoch;
  for (const TraceRow& r : trace) {
    auto& [total, count] = per_epoch[r.epoch];
    total += r.total;
    ++count;
  }
  for (const auto& [epoch, acc] : per_epoch) {
    out << "epoch " << epoch << " mean_total=" << format_real(acc.first / double(acc.second)) << "\n";
  }
}

void finish_training(const fs::path& dir, LoopKind loop, ModelKind kind, const RunConfig& cfg,
                     const ParameterSet<float>& params, const std::vector<TraceRow>& trace, std::ostream& out) {
  save_checkpoint(dir, kind, cfg.model, params);
  write_file_atomic(dir / "train.cfg", format_run_config(cfg));
  write_file_atomic(dir / "trace.csv", trace_to_csv(trace, loop));
  report_trace(trace, out);
  out << "wrote " << model_kind_name(kind) << " checkpoint to " << dir.string() << "\n";
}

std::vector<Sequence> load_training_data(const std::string& dir) {
  std::vector<Sequence> data = read_dataset(dir);
  if (data.empty()) throw ValidationError("no sequences under " + dir);
  return data;
}

void cmd_train(LoopKind loop, const TrainArgs& a, std::ostream& out) {
  if (loop == LoopKind::kDistill && a.teacher.empty()) throw UsageError("distill requires --teacher");
  if (loop != LoopKind::kTeacher && (a.no_prompter || a.no_spatial || a.no_token || a.no_history)) {
    throw UsageError("prompter ablation flags apply to train-teacher only");
  }
  if (loop != LoopKind::kDistill && (a.no_response_kd || a.no_feature_kd)) {
    throw UsageError("distillation flags apply to distill only");
  }
  const RunConfig cfg = resolve_config(loop, a);
  std::optional<TeacherModel<float>> teacher;
  if (loop == LoopKind::kDistill) teacher.emplace(load_teacher(a.teacher));
  const std::vector<Sequence> data = load_training_data(a.data);
  out << loop_name(loop) << ": " << data.size() << " sequences, " << cfg.train.epochs << " epochs x "
      << cfg.train.samples_per_epoch << " samples\n";
  if (loop == LoopKind::kTeacher) {
    TeacherModel<float> model(cfg.model, cfg.train.seed);
    const auto trace = train_teacher(model, data, cfg.train);
    finish_training(a.out, loop, ModelKind::kTeacher, cfg, model.parameters(), trace, out);
    return;
  }
  StudentModel<float> model(cfg.model, cfg.train.seed);
  if (loop == LoopKind::kDistill) {
    const auto trace = distill_student(model, *teacher, data, cfg.train);
    finish_training(a.out, loop, ModelKind::kStudent, cfg, model.parameters(), trace, out);
  } else {
    const auto trace = train_fost(model, data, cfg.train);
    finish_training(a.out, loop, ModelKind::kFost, cfg, model.parameters(), trace, out);
  }
}

// --- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string data;
  std::string report;
  std::string kind;
  std::string csv;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.kind != "oracle" && a.model.empty()) throw UsageError("eval requires --model unless --model-kind oracle");
  const std::vector<Sequence> data = read_dataset(a.data);
  if (data.empty()) throw ValidationError("no sequences under " + a.data);
  std::vector<TrackResult> results;
  if (a.kind == "oracle") {
    results = track_sequences_oracle(data);
  } else {
    const ModelKind kind = a.kind.empty() ? read_checkpoint_info(a.model).kind : parse_model_kind(a.kind);
    if (kind == ModelKind::kTeacher) {
      results = track_sequences(load_teacher(a.model), data);
    } else {
      results = track_sequences(load_student(a.model), data);
    }
  }
  const MetricReport report = precision_success(results);
  write_file_atomic(a.report, report_to_json(report));
  if (!a.csv.empty()) write_file_atomic(a.csv, report_to_csv(report));
  out << std::fixed << std::setprecision(4) << "PR=" << report.pr << " SR=" << report.sr << "\n";
  for (const auto& [tag, sub] : report.attributes) out << "  " << tag << " PR=" << sub.pr << " SR=" << sub.sr << "\n";
}

// --- bench-complexity -----------------------------------------------------------

struct BenchArgs {
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  std::optional<std::uint64_t> compare;
  bool measure = false;
};

double time_mhsa(std::uint64_t n, std::uint64_t d) {
  ModelConfig cfg;
  cfg.dim = static_cast<Index>(d);
  Index heads = 1;
  for (Index h : {12, 8, 4, 2}) {
    if (cfg.dim % h == 0) {
      heads = h;
      break;
    }
  }
  ParameterSet<float> set;
  const auto layer = EncoderLayerParams<float>::create(set, "bench", cfg);
  Rng rng(1);
  initialize_parameters(set, rng);
  set.set_requires_grad(false);
  Buffer<float> values(static_cast<Index>(n * d));
  for (Index i = 0; i < values.size(); ++i) values[i] = static_cast<float>(rng.normal());
  const Tensor<float> x({static_cast<Index>(n), cfg.dim}, std::move(values), false);
  const auto start = std::chrono::steady_clock::now();
  const Tensor<float> y = mhsa(x, layer, heads);
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count();
}

void cmd_bench(const BenchArgs& a, std::ostream& out) {
  const std::uint64_t base = sa_flops(a.n, a.d);
  out << "sa_flops(n=" << a.n << ", d=" << a.d << ") = " << base << "\n";
  if (a.compare) {
    const std::uint64_t other = sa_flops(*a.compare, a.d);
    out << "sa_flops(n=" << *a.compare << ", d=" << a.d << ") = " << other << "\n";
    out << "ratio = " << std::fixed << std::setprecision(4) << double(other) / double(base) << "\n";
  }
  if (a.measure) {
    const double t0 = time_mhsa(a.n, a.d);
    out << std::defaultfloat << "mhsa_seconds(n=" << a.n << ") = " << t0 << "\n";
    if (a.compare) {
      const double t1 = time_mhsa(*a.compare, a.d);
      out << "mhsa_seconds(n=" << *a.compare << ") = " << t1 << "\n";
      out << "wall_clock_ratio = " << std::fixed << std::setprecision(4) << t1 / t0 << "\n";
    }
  }
}

// --- dump-maps ------------------------------------------------------------------

struct DumpArgs {
  std::string model;
  std::string data;
  std::string sequence;
  std::string kind;
  Index frame = 0;
  std::string out;
};

std::string float_text(float v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string map_csv(const RowMatrix<float>& m) {
  std::string s;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) s += (c ? "," : "") + float_text(m(r, c));
    s += "\n";
  }
  return s;
}

/// 8-bit binary PGM, min-max scaled; a constant map is all zero.
std::string map_pgm(const RowMatrix<float>& m) {
  std::string s = "P5\n" + std::to_string(m.cols()) + " " + std::to_string(m.rows()) + "\n255\n";
  const double lo = m.minCoeff();
  const double hi = m.maxCoeff();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const double t = hi > lo ? (double(m(r, c)) - lo) / (hi - lo) : 0.0;
      s.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
    }
  }
  return s;
}

/// Search-row attention summarised per query as the max over template keys,
/// laid out on the search grid.
RowMatrix<float> search_to_template(const RowMatrix<float>& attn, Index q0, Index k0, const ModelConfig& cfg) {
  const Index g = cfg.search_grid();
  RowMatrix<float> out(g, g);
  for (Index i = 0; i < cfg.search_tokens(); ++i) {
    out(i / g, i % g) = attn.row(q0 + i).segment(k0, cfg.template_tokens()).maxCoeff();
  }
  return out;
}

void cmd_dump_maps(const DumpArgs& a, std::ostream& out) {
  std::vector<fs::path> seqs = list_sequences(a.data);
  if (seqs.empty()) throw ValidationError("no sequences under " + a.data);
  fs::path chosen = seqs.front();
  if (!a.sequence.empty()) {
    const auto it = std::find_if(seqs.begin(), seqs.end(), [&](const fs::path& p) { return p.filename() == a.sequence; });
    if (it == seqs.end()) throw ValidationError("no sequence named '" + a.sequence + "' under " + a.data);
    chosen = *it;
  }
  const Sequence seq = read_sequence(chosen);
  if (a.frame < 0 || a.frame >= seq.meta.num_frames) {
    throw ValidationError("--frame " + std::to_string(a.frame) + " outside [0, " +
                          std::to_string(seq.meta.num_frames) + ")");
  }
  const ModelKind kind = a.kind.empty() ? read_checkpoint_info(a.model).kind : parse_model_kind(a.kind);
  const auto f = static_cast<std::size_t>(a.frame);
  ForwardOptions options;
  options.capture_attention = true;
  RowMatrix<float> attn_rgb;
  RowMatrix<float> attn_tir;
  RowMatrix<float> score;
  auto sample_for = [&](const ModelConfig& cfg) {
    return make_sample(seq.frames[0], seq.meta.gt[0], seq.frames[f], seq.meta.gt[f], crop_config_for(cfg), nullptr);
  };
  ModelConfig cfg;
  if (kind == ModelKind::kTeacher) {
    const TeacherModel<float> model = load_teacher(a.model);
    cfg = model.config();
    const auto o = model.forward(sample_for(cfg), options);
    attn_rgb = search_to_template(o.attention_rgb, cfg.template_tokens(), 0, cfg);
    attn_tir = search_to_template(o.attention_tir, cfg.template_tokens(), 0, cfg);
    score = o.head.score.matrix();
  } else {
    const StudentModel<float> model = load_student(a.model);
    cfg = model.config();
    const auto o = model.forward(sample_for(cfg), options);
    const Index n = cfg.tokens();
    attn_rgb = search_to_template(o.attention, cfg.template_tokens(), 0, cfg);
    attn_tir = search_to_template(o.attention, n + cfg.template_tokens(), n, cfg);
    score = o.head.score.matrix();
  }
  const fs::path dir(a.out);
  for (const auto& [name, m] : {std::pair{"attention_rgb", &attn_rgb}, std::pair{"attention_tir", &attn_tir},
                                std::pair{"score", &score}}) {
    write_file_atomic(dir / (std::string(name) + ".pgm"), map_pgm(*m));
    write_file_atomic(dir / (std::string(name) + ".csv"), map_csv(*m));
  }
  out << "wrote attention_rgb, attention_tir and score maps (" << cfg.search_grid() << "x" << cfg.search_grid()
      << ") for " << seq.meta.name << " frame " << a.frame << " to " << a.out << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"RGB-T tracking: synthetic data, teacher training, distillation and evaluation", "rtkd"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic RGB-T sequences");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--scenario", gen.scenario, "Scenario kind, or 'mixed' to cycle through all kinds");
  gen_cmd->add_option("--frames", gen.frames, "Frames per sequence");
  gen_cmd->add_option("--seqs", gen.seqs, "Number of sequences");
  gen_cmd->add_option("--seed", gen.seed, "Base seed");
  gen_cmd->add_option("--size", gen.size, "Frame width and height in pixels");
  gen_cmd->add_option("--noise", gen.noise, "Pixel noise standard deviation");

  TrainArgs train;
  auto add_train = [&](const char* name, const char* help) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", train.config, "key = value config file (defaults when omitted)");
    cmd->add_option("--data", train.data, "Dataset directory")->required();
    cmd->add_option("--out", train.out, "Checkpoint directory to write")->required();
    cmd->add_option("--set", train.overrides, "Override one config key, as key=value");
    return cmd;
  };
  auto* teacher_cmd = add_train("train-teacher", "Train the two-stream teacher");
  teacher_cmd->add_flag("--no-prompter", train.no_prompter, "Drop every mutual prompter");
  teacher_cmd->add_flag("--no-spatial-attn", train.no_spatial, "Disable spatial attention in the prompters");
  teacher_cmd->add_flag("--no-token-attn", train.no_token, "Disable token attention in the prompters");
  teacher_cmd->add_flag("--no-history", train.no_history, "Do not feed the previous prompt forward");
  auto* distill_cmd = add_train("distill", "Distil a one-stream student from a trained teacher");
  distill_cmd->add_option("--teacher", train.teacher, "Teacher checkpoint directory");
  distill_cmd->add_flag("--no-response-kd", train.no_response_kd, "Drop the response-map term");
  distill_cmd->add_flag("--no-feature-kd", train.no_feature_kd, "Drop the feature term");
  auto* fost_cmd = add_train("train-fost", "Train the one-stream control model without distillation");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Track every sequence and write a metric report");
  eval_cmd->add_option("--model", eval.model, "Checkpoint directory");
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--report", eval.report, "Report JSON path")->required();
  eval_cmd->add_option("--model-kind", eval.kind, "teacher, student, fost or oracle (default: from checkpoint)")
      ->check(CLI::IsMember({"teacher", "student", "fost", "oracle"}));
  eval_cmd->add_option("--csv", eval.csv, "Optional curve CSV path");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench-complexity", "Self-attention cost model");
  bench_cmd->add_option("--n", bench.n, "Token count")->required();
  bench_cmd->add_option("--d", bench.d, "Embedding width")->required();
  bench_cmd->add_option("--compare", bench.compare, "Second token count for a ratio");
  bench_cmd->add_flag("--measure", bench.measure, "Also time one attention forward per size");

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-maps", "Write attention and response maps as PGM and CSV");
  dump_cmd->add_option("--model", dump.model, "Checkpoint directory")->required();
  dump_cmd->add_option("--data", dump.data, "Dataset directory")->required();
  dump_cmd->add_option("--sequence", dump.sequence, "Sequence name (default: first)");
  dump_cmd->add_option("--frame", dump.frame, "Frame index");
  dump_cmd->add_option("--model-kind", dump.kind, "teacher, student or fost (default: from checkpoint)")
      ->check(CLI::IsMember({"teacher", "student", "fost"}));
  dump_cmd->add_option("--out", dump.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "ERROR:usage: " << msg << "\n";
    return static_cast<int>(ErrorCategory::kUsage);
  }

  try {
    if (gen_cmd->parsed()) cmd_gen_data(gen, out);
    if (teacher_cmd->parsed()) cmd_train(LoopKind::kTeacher, train, out);
    if (distill_cmd->parsed()) cmd_train(LoopKind::kDistill, train, out);
    if (fost_cmd->parsed()) cmd_train(LoopKind::kFost, train, out);
    if (eval_cmd->parsed()) cmd_eval(eval, out);
    if (bench_cmd->parsed()) cmd_bench(bench, out);
    if (dump_cmd->parsed()) cmd_dump_maps(dump, out);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "ERROR:" << category_name(e.category()) << ": " << msg << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "ERROR:format: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::kFormat);
  }
  return 0;
}

}  // namespace rtkd
