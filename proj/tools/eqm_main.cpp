// Command-line front end: wires the library modules into reproducible
// pipelines. Data goes to files or standard output, logs go to standard
// error, and every file-producing run writes a manifest with input/output
// checksums and the resolved config.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eqm/eqm.hpp"

namespace {

using namespace eqm;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string log_level;
};

PipelineConfig resolve_config(const GlobalOptions& global) {
  PipelineConfig cfg;
  if (!global.config_path.empty()) {
    cfg = parse_pipeline_config(read_file(global.config_path));
  }
  if (global.seed) cfg.seed = *global.seed;
  return cfg;
}

std::string file_checksum(const std::string& path) { return to_hex16(fnv1a64(read_file(path))); }

// Manifest named `<primary output>.manifest.json`; checksums are FNV-1a 64 of
// the file bytes. No timestamps, so re-runs stay byte-identical.
void write_manifest(const std::string& primary_output, const std::string& command,
                    const PipelineConfig& cfg, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  nlohmann::ordered_json m;
  m["tool"] = "eqm";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config_to_json(cfg);
  m["inputs"] = nlohmann::ordered_json::object();
  for (const std::string& p : inputs) m["inputs"][p] = file_checksum(p);
  m["outputs"] = nlohmann::ordered_json::object();
  for (const std::string& p : outputs) m["outputs"][p] = file_checksum(p);
  write_file(primary_output + ".manifest.json", m.dump(2) + "\n");
}

// Writes to `path`, or to stdout when path is empty. Returns whether a file
// was produced (and so whether a manifest applies).
bool emit(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::fwrite(content.data(), 1, content.size(), stdout);
    return false;
  }
  write_file(path, content);
  return true;
}

std::string metadata_record(const MetadataFeatures& meta) {
  std::string out;
  out += "Resolution " + std::to_string(meta.resolution) + "\n";
  out += "FrameRate " + format_sig9(meta.frame_rate) + "\n";
  out += std::string("Codec ") + codec_name(meta.codec) + "\n";
  out += "PixelFormat " + meta.pixel_format() + "\n";
  out += "Bitrate " + format_sig9(meta.bitrate_kbps) + "\n";
  return out;
}

std::string report_text(const EvalReport& rep) {
  std::string out;
  out += "n " + std::to_string(rep.n) + "\n";
  out += "srocc " + format_sig9(rep.srocc) + "\n";
  out += "plcc " + format_sig9(rep.plcc) + "\n";
  out += "krocc " + format_sig9(rep.krocc) + "\n";
  out += "rmse " + format_sig9(rep.rmse) + "\n";
  out += std::string("degenerate ") + (rep.degenerate ? "1" : "0") + "\n";
  return out;
}

std::vector<MosEntry> read_mos_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise("cli.IoError", "cannot open '" + path + "'");
  return read_mos_csv(in);
}

FeatureTable read_feature_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise("cli.IoError", "cannot open '" + path + "'");
  return read_feature_csv(in);
}

// A two-column `video_id,<name>` CSV; the header names the column.
std::pair<std::string, std::vector<MosEntry>> read_named_column(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise("cli.IoError", "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) raise("dataset.SyntaxError", "empty CSV '" + path + "'");
  line = strip_cr(std::move(line));
  const std::vector<std::string> header = split(line, ',');
  if (header.size() != 2 || header[0] != "video_id" || header[1].empty()) {
    raise("dataset.SyntaxError", "'" + path + "': expected header video_id,<column>");
  }
  std::vector<MosEntry> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != 2) {
      raise("dataset.SyntaxError",
            "'" + path + "' line " + std::to_string(line_no) + ": expected 2 fields");
    }
    detail::check_video_id(fields[0], line_no);
    rows.push_back({fields[0], detail::parse_csv_double(fields[1], line_no, header[1])});
  }
  return {header[1], std::move(rows)};
}

// MOS-only dataset: fusion on labels alone, with no feature columns.
LabeledDataset mos_only_dataset(std::span<const MosEntry> rows) {
  LabeledDataset data;
  for (const MosEntry& r : rows) {
    data.video_ids.push_back(r.video_id);
    data.features.emplace_back();
    data.mos.push_back(r.mos);
  }
  return data;
}

std::string trace_video_id(const std::string& path) {
  std::string name = std::filesystem::path(path).filename().string();
  for (const char* suffix : {".jsonl", ".trace"}) {
    const std::string_view s(suffix);
    if (name.size() > s.size() && name.ends_with(s)) name.resize(name.size() - s.size());
  }
  detail::check_video_id(name, 0);
  return name;
}

ChromaFormat chroma_from_name(const std::string& name) {
  if (name == "mono") return ChromaFormat::mono;
  if (name == "420") return ChromaFormat::c420;
  if (name == "422") return ChromaFormat::c422;
  if (name == "444") return ChromaFormat::c444;
  raise("cli.BadArguments", "unknown chroma format '" + name + "' (mono, 420, 422, 444)");
}

// --- subcommand bodies ------------------------------------------------------

struct ProbeArgs {
  std::string input;
  double duration = 0.0;
  std::optional<double> fps;
  std::string output;
};

void run_probe(const ProbeArgs& args, const PipelineConfig& cfg) {
  const std::string bytes = read_file(args.input);
  const std::span<const std::uint8_t> stream(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                             bytes.size());
  const MetadataFeatures meta = probe_metadata(stream, args.duration, args.fps);
  if (emit(args.output, metadata_record(meta))) {
    write_manifest(args.output, "probe", cfg, {args.input}, {args.output});
  }
}

struct ExtractArgs {
  std::vector<std::string> traces;
  std::string output;
  std::optional<std::size_t> segment_length;
  bool average = false;
  std::optional<double> fps;
  int bit_depth = 8;
  std::string chroma = "420";
  bool full_range = false;
  std::vector<std::string> externals;
};

void run_extract(const ExtractArgs& args, const PipelineConfig& cfg) {
  const std::size_t segment_length = args.segment_length.value_or(cfg.segment_length);
  FeatureTable table;
  table.columns = standard_feature_columns();

  for (const std::string& path : args.traces) {
    const std::string video_id = trace_video_id(path);
    std::ifstream in(path);
    if (!in) raise("cli.IoError", "cannot open '" + path + "'");
    const std::vector<FrameRecord> frames = parse_trace(in);

    MetadataFeatures meta;
    meta.resolution = static_cast<std::uint64_t>(frames.front().width) *
                      static_cast<std::uint64_t>(frames.front().height);
    meta.frame_rate = args.fps.value_or(frames.front().frame_rate);
    meta.codec = Codec::h265;
    meta.chroma_format = chroma_from_name(args.chroma);
    meta.bit_depth = args.bit_depth;
    meta.full_range = args.full_range;
    std::int64_t bytes = 0;
    for (const FrameRecord& f : frames) bytes += f.frame_size;
    const double duration = static_cast<double>(frames.size()) / meta.frame_rate;
    meta.bitrate_kbps = static_cast<double>(bytes) * 8.0 / duration / 1000.0;

    const std::vector<SegmentFeatures> segments =
        pool_trace(frames, meta, cfg.norm, segment_length);
    if (args.average) {
      table.video_ids.push_back(video_id);
      table.segment_ids.push_back(-1);
      table.values.push_back(flatten_features(average_segments(segments)));
    } else {
      for (std::size_t s = 0; s < segments.size(); ++s) {
        table.video_ids.push_back(video_id);
        table.segment_ids.push_back(static_cast<std::int64_t>(s));
        table.values.push_back(flatten_features(segments[s]));
      }
    }
  }

  for (const std::string& ext_path : args.externals) {
    auto [name, rows] = read_named_column(ext_path);
    std::unordered_map<std::string, double> by_id;
    for (const MosEntry& r : rows) by_id[r.video_id] = r.mos;
    table.columns.push_back(name);
    for (std::size_t r = 0; r < table.video_ids.size(); ++r) {
      const auto it = by_id.find(table.video_ids[r]);
      if (it == by_id.end()) {
        raise("cli.MissingExternal",
              "'" + ext_path + "' has no value for video '" + table.video_ids[r] + "'");
      }
      table.values[r].push_back(it->second);
    }
  }

  std::ostringstream out;
  write_feature_csv(out, table);
  write_file(args.output, out.str());
  write_manifest(args.output, "extract", cfg, args.traces, {args.output});
}

struct FuseArgs {
  std::string target;
  std::vector<std::string> sources;
  std::vector<std::string> anchors;
  std::string output;
};

void run_fuse(const FuseArgs& args, const PipelineConfig& cfg) {
  if (args.sources.size() != args.anchors.size()) {
    raise("cli.BadArguments", "each --source needs a matching --anchors file");
  }
  const LabeledDataset target = mos_only_dataset(read_mos_file(args.target));
  std::vector<std::pair<LabeledDataset, AnchorSet>> sources;
  for (std::size_t i = 0; i < args.sources.size(); ++i) {
    std::ifstream in(args.anchors[i]);
    if (!in) raise("cli.IoError", "cannot open '" + args.anchors[i] + "'");
    sources.emplace_back(mos_only_dataset(read_mos_file(args.sources[i])), read_anchors_csv(in));
  }
  const FusionResult result = fuse_datasets(target, sources);

  std::string map_report;
  for (std::size_t i = 0; i < result.maps.size(); ++i) {
    const LinearMap& m = result.maps[i];
    map_report += "map " + args.sources[i] + " a " + format_sig9(m.a) + " b " + format_sig9(m.b) +
                  " r2 " + format_sig9(m.r2) + " n_anchors " + std::to_string(m.n_anchors) + "\n";
  }
  std::fwrite(map_report.data(), 1, map_report.size(), stdout);

  std::vector<MosEntry> fused;
  fused.reserve(result.fused.size());
  for (std::size_t r = 0; r < result.fused.size(); ++r) {
    fused.push_back({result.fused.video_ids[r], result.fused.mos[r]});
  }
  std::ostringstream out;
  write_mos_csv(out, fused);
  write_file(args.output, out.str());
  std::vector<std::string> inputs = {args.target};
  inputs.insert(inputs.end(), args.sources.begin(), args.sources.end());
  inputs.insert(inputs.end(), args.anchors.begin(), args.anchors.end());
  write_manifest(args.output, "fuse", cfg, inputs, {args.output});
}

struct TrainArgs {
  std::string features;
  std::string mos;
  std::string output;
  std::optional<std::string> level;
  std::optional<std::size_t> trees;
  bool without_base_qp = false;
};

TrainOptions make_train_options(const PipelineConfig& cfg, const LabeledDataset& data,
                                const std::optional<std::string>& level,
                                std::optional<std::size_t> trees, bool without_base_qp) {
  TrainOptions opts;
  opts.level = level ? level_from_name(*level) : cfg.level;
  opts.without_base_qp = without_base_qp || cfg.without_base_qp;
  opts.norm = cfg.norm;
  opts.base_params = cfg.base;
  opts.residual_params = cfg.residual;
  if (trees) {
    opts.base_params.n_trees = *trees;
    opts.residual_params.n_trees = *trees;
  }
  opts.base_params.seed = derive_stream(cfg.seed, 1);
  opts.residual_params.seed = derive_stream(cfg.seed, 2);
  if (!cfg.externals.empty()) {
    opts.external_columns = cfg.externals;
  } else {
    // Every column beyond the canonical set is an external by default.
    const std::vector<std::string> standard = standard_feature_columns();
    for (std::size_t c = standard.size(); c < data.feature_names.size(); ++c) {
      opts.external_columns.push_back(data.feature_names[c]);
    }
  }
  return opts;
}

void run_train(const TrainArgs& args, const PipelineConfig& cfg) {
  const FeatureTable table = read_feature_file(args.features);
  const std::vector<MosEntry> labels = read_mos_file(args.mos);
  const LabeledDataset data = join_labels(table, labels);
  const TrainOptions opts =
      make_train_options(cfg, data, args.level, args.trees, args.without_base_qp);
  const EqmModel model = train_eqm(data, opts);
  save_model(model, args.output);
  write_manifest(args.output, "train", cfg, {args.features, args.mos}, {args.output});
}

struct PredictArgs {
  std::string model;
  std::string features;
  std::string output;
};

void run_predict(const PredictArgs& args, const PipelineConfig& cfg) {
  const EqmModel model = load_model(args.model);
  const FeatureTable table = read_feature_file(args.features);
  std::unordered_set<std::string> seen;
  for (const std::string& id : table.video_ids) {
    if (!seen.insert(id).second) {
      raise("dataset.DuplicateVideoId",
            "feature table has multiple rows for video '" + id + "'; average segments first");
    }
  }
  const ModelInputBinding binding = bind_inputs(model, table.columns);
  std::vector<MosEntry> scores;
  scores.reserve(table.video_ids.size());
  for (std::size_t r = 0; r < table.video_ids.size(); ++r) {
    scores.push_back({table.video_ids[r], predict_eqm(model, binding, table.values[r])});
  }
  std::ostringstream out;
  write_mos_csv(out, scores, "score");
  write_file(args.output, out.str());
  write_manifest(args.output, "predict", cfg, {args.model, args.features}, {args.output});
}

struct CrossvalArgs {
  std::string features;
  std::string mos;
  std::size_t folds = 5;
  std::size_t reps = 20;
  std::optional<std::string> level;
  std::optional<std::size_t> trees;
  bool without_base_qp = false;
  std::string output;
  std::string per_rep;
};

void run_crossval(const CrossvalArgs& args, const PipelineConfig& cfg) {
  const FeatureTable table = read_feature_file(args.features);
  const std::vector<MosEntry> labels = read_mos_file(args.mos);
  const LabeledDataset data = join_labels(table, labels);
  CrossValOptions opts;
  opts.train = make_train_options(cfg, data, args.level, args.trees, args.without_base_qp);
  opts.folds = args.folds;
  opts.reps = args.reps;
  opts.seed = cfg.seed;
  const EvalReport report = cross_validate(data, opts);

  std::vector<std::string> outputs;
  if (emit(args.output, report_text(report))) outputs.push_back(args.output);
  if (!args.per_rep.empty()) {
    std::string csv = "rep,srocc,plcc,krocc,rmse\n";
    for (std::size_t r = 0; r < report.per_rep.size(); ++r) {
      const EvalReport& rep = report.per_rep[r];
      csv += std::to_string(r) + ',' + format_sig9(rep.srocc) + ',' + format_sig9(rep.plcc) + ',' +
             format_sig9(rep.krocc) + ',' + format_sig9(rep.rmse) + '\n';
    }
    write_file(args.per_rep, csv);
    outputs.push_back(args.per_rep);
  }
  if (!outputs.empty()) {
    write_manifest(outputs.front(), "crossval", cfg, {args.features, args.mos}, outputs);
  }
}

struct EvalArgs {
  std::string pred;
  std::string truth;
  std::string output;
};

void run_eval(const EvalArgs& args, const PipelineConfig& cfg) {
  const std::vector<MosEntry> pred = read_mos_file(args.pred);
  const std::vector<MosEntry> truth = read_mos_file(args.truth);
  std::unordered_map<std::string, double> truth_by_id;
  for (const MosEntry& t : truth) {
    if (!truth_by_id.emplace(t.video_id, t.mos).second) {
      raise("dataset.DuplicateVideoId", "truth lists video '" + t.video_id + "' twice");
    }
  }
  std::vector<double> p, t;
  p.reserve(pred.size());
  t.reserve(pred.size());
  for (const MosEntry& e : pred) {
    const auto it = truth_by_id.find(e.video_id);
    if (it == truth_by_id.end()) {
      raise("dataset.MissingLabel", "no truth entry for video '" + e.video_id + "'");
    }
    p.push_back(e.mos);
    t.push_back(it->second);
  }
  if (truth_by_id.size() > pred.size()) {
    log::warn(std::to_string(truth_by_id.size() - pred.size()) +
              " truth entries have no prediction; ignored");
  }
  const EvalReport report = correlations(p, t);
  if (emit(args.output, report_text(report))) {
    write_manifest(args.output, "eval", cfg, {args.pred, args.truth}, {args.output});
  }
}

struct SynthArgs {
  std::string out_dir;
  std::size_t videos = 16;
  int frames_min = 48;
  int frames_max = 96;
};

void run_synth(const SynthArgs& args, const PipelineConfig& cfg) {
  SynthConfig synth_cfg;
  synth_cfg.n_videos = args.videos;
  synth_cfg.seed = cfg.seed;
  synth_cfg.frames_min = args.frames_min;
  synth_cfg.frames_max = args.frames_max;
  if (synth_cfg.frames_min < 1 || synth_cfg.frames_max < synth_cfg.frames_min) {
    raise("cli.BadArguments", "frame count bounds must satisfy 1 <= min <= max");
  }
  std::filesystem::create_directories(args.out_dir);
  const std::filesystem::path dir(args.out_dir);

  const std::vector<SynthVideoSpec> specs = make_synth_specs(synth_cfg);
  std::vector<std::string> outputs;
  std::vector<MosEntry> mos_rows, pixel_rows;
  for (const SynthVideoSpec& spec : specs) {
    const std::vector<FrameRecord> frames = make_synth_trace(spec);
    const std::string path = (dir / (spec.video_id + ".trace.jsonl")).string();
    write_file(path, serialize_trace(frames));
    outputs.push_back(path);
    mos_rows.push_back({spec.video_id, spec.mos});
    pixel_rows.push_back({spec.video_id, spec.pixel_metric});
  }
  const std::string mos_path = (dir / "mos.csv").string();
  const std::string pixel_path = (dir / "pixel_metric.csv").string();
  std::ostringstream mos_out, pixel_out;
  write_mos_csv(mos_out, mos_rows);
  write_mos_csv(pixel_out, pixel_rows, kPixelMetricColumn);
  write_file(mos_path, mos_out.str());
  write_file(pixel_path, pixel_out.str());
  outputs.push_back(mos_path);
  outputs.push_back(pixel_path);
  write_manifest((dir / "run").string(), "synth", cfg, {}, outputs);
}

struct RqArgs {
  std::string features;
  std::string scores;
  std::string output;
  std::string crossovers;
};

void run_rq(const RqArgs& args, const PipelineConfig& cfg) {
  const FeatureTable table = read_feature_file(args.features);
  const std::vector<MosEntry> scores = read_mos_file(args.scores);
  const std::vector<RqPoint> points = build_rq_points(table, scores);

  std::string csv = "bitrate,resolution,score\n";
  for (const RqPoint& p : points) {
    csv += format_sig9(p.bitrate) + ',' + format_sig9(p.resolution) + ',' +
           format_sig9(p.score) + '\n';
  }
  write_file(args.output, csv);

  const std::vector<RqCurve> curves = build_rq_curves(points);
  const std::vector<RqCrossover> crossings = find_rq_crossovers(curves);
  std::string report;
  for (const RqCrossover& c : crossings) {
    report += "crossover resolution " + format_sig9(c.resolution_a) + " x " +
              format_sig9(c.resolution_b) + " bitrate " + format_sig9(c.bitrate) + " score " +
              format_sig9(c.score) + "\n";
  }
  std::fwrite(report.data(), 1, report.size(), stdout);

  std::vector<std::string> outputs = {args.output};
  if (!args.crossovers.empty()) {
    std::string cross_csv = "resolution_a,resolution_b,bitrate,score\n";
    for (const RqCrossover& c : crossings) {
      cross_csv += format_sig9(c.resolution_a) + ',' + format_sig9(c.resolution_b) + ',' +
                   format_sig9(c.bitrate) + ',' + format_sig9(c.score) + '\n';
    }
    write_file(args.crossovers, cross_csv);
    outputs.push_back(args.crossovers);
  }
  write_manifest(args.output, "rq", cfg, {args.features, args.scores}, outputs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EQM video quality metric pipeline"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--config", global.config_path, "pipeline config JSON");
  app.add_option("--seed", global.seed, "master seed (overrides config)");
  app.add_option("--threads", global.threads, "worker thread count");
  app.add_option("--log-level", global.log_level, "debug, info, warn, error, off");

  ProbeArgs probe_args;
  CLI::App* probe = app.add_subcommand("probe", "read stream metadata from an Annex-B file");
  probe->add_option("input", probe_args.input, "raw .hevc/.h265 file")->required();
  probe->add_option("--duration", probe_args.duration, "stream duration in seconds")->required();
  probe->add_option("--fps", probe_args.fps, "frame-rate override (wins over VUI timing)");
  probe->add_option("-o,--output", probe_args.output, "output file (default stdout)");

  ExtractArgs extract_args;
  CLI::App* extract = app.add_subcommand("extract", "compute segment features from trace files");
  extract->add_option("traces", extract_args.traces, "trace JSONL files, one video each")
      ->required();
  extract->add_option("-o,--output", extract_args.output, "feature CSV")->required();
  extract->add_option("--segment-length", extract_args.segment_length,
                      "frames per segment (0 = whole trace)");
  extract->add_flag("--average", extract_args.average, "emit one averaged row per video");
  extract->add_option("--fps", extract_args.fps, "frame-rate override");
  extract->add_option("--bit-depth", extract_args.bit_depth, "luma bit depth (default 8)");
  extract->add_option("--chroma", extract_args.chroma, "mono, 420, 422, 444 (default 420)");
  extract->add_flag("--full-range", extract_args.full_range, "full-range video signal");
  extract->add_option("--external", extract_args.externals,
                      "video_id,<name> CSV appended as an external column (repeatable)");

  FuseArgs fuse_args;
  CLI::App* fuse = app.add_subcommand("fuse", "map source-study MOS onto a target scale");
  fuse->add_option("--target", fuse_args.target, "target-study MOS CSV")->required();
  fuse->add_option("--source", fuse_args.sources, "source-study MOS CSV (repeatable)")
      ->required();
  fuse->add_option("--anchors", fuse_args.anchors,
                   "anchor CSV video_id,source_mos,target_mos (one per source)")
      ->required();
  fuse->add_option("-o,--output", fuse_args.output, "fused MOS CSV")->required();

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "fit a quality model from features and MOS");
  train->add_option("--features", train_args.features, "feature CSV")->required();
  train->add_option("--mos", train_args.mos, "MOS CSV")->required();
  train->add_option("-o,--output", train_args.output, "model file")->required();
  train->add_option("--level", train_args.level, "metadata, nr, fr");
  train->add_option("--trees", train_args.trees, "trees per forest (overrides config)");
  train->add_flag("--without-base-qp", train_args.without_base_qp,
                  "drop mean QP from the base stage");

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "score feature rows with a trained model");
  predict->add_option("--model", predict_args.model, "model file")->required();
  predict->add_option("--features", predict_args.features, "feature CSV")->required();
  predict->add_option("-o,--output", predict_args.output, "scores CSV")->required();

  CrossvalArgs crossval_args;
  CLI::App* crossval = app.add_subcommand("crossval", "repeated k-fold cross-validation");
  crossval->add_option("--features", crossval_args.features, "feature CSV")->required();
  crossval->add_option("--mos", crossval_args.mos, "MOS CSV")->required();
  crossval->add_option("--folds", crossval_args.folds, "fold count (default 5)");
  crossval->add_option("--reps", crossval_args.reps, "repetition count (default 20)");
  crossval->add_option("--level", crossval_args.level, "metadata, nr, fr");
  crossval->add_option("--trees", crossval_args.trees, "trees per forest (overrides config)");
  crossval->add_flag("--without-base-qp", crossval_args.without_base_qp,
                     "drop mean QP from the base stage");
  crossval->add_option("-o,--output", crossval_args.output, "report file (default stdout)");
  crossval->add_option("--per-rep", crossval_args.per_rep, "per-repetition metrics CSV");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "correlation metrics for predictions vs truth");
  eval->add_option("--pred", eval_args.pred, "predicted scores CSV")->required();
  eval->add_option("--truth", eval_args.truth, "ground-truth MOS CSV")->required();
  eval->add_option("-o,--output", eval_args.output, "report file (default stdout)");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a seeded synthetic study");
  synth->add_option("--out-dir", synth_args.out_dir, "output directory")->required();
  synth->add_option("--videos", synth_args.videos, "video count (default 16)");
  synth->add_option("--frames-min", synth_args.frames_min, "minimum frames per video");
  synth->add_option("--frames-max", synth_args.frames_max, "maximum frames per video");

  RqArgs rq_args;
  CLI::App* rq = app.add_subcommand("rq", "emit rate-quality curve data and crossovers");
  rq->add_option("--features", rq_args.features, "feature CSV with Bitrate/Resolution")
      ->required();
  rq->add_option("--scores", rq_args.scores, "scores CSV")->required();
  rq->add_option("-o,--output", rq_args.output, "rate-quality CSV")->required();
  rq->add_option("--crossovers", rq_args.crossovers, "crossover CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: cli.Usage: %s\n", e.what());
    return 2;
  }

  try {
    if (!global.log_level.empty()) log::threshold() = log::parse_level(global.log_level);
    if (global.threads) thread_count() = std::max(1u, *global.threads);
    const PipelineConfig cfg = resolve_config(global);
    if (probe->parsed()) run_probe(probe_args, cfg);
    if (extract->parsed()) run_extract(extract_args, cfg);
    if (fuse->parsed()) run_fuse(fuse_args, cfg);
    if (train->parsed()) run_train(train_args, cfg);
    if (predict->parsed()) run_predict(predict_args, cfg);
    if (crossval->parsed()) run_crossval(crossval_args, cfg);
    if (eval->parsed()) run_eval(eval_args, cfg);
    if (synth->parsed()) run_synth(synth_args, cfg);
    if (rq->parsed()) run_rq(rq_args, cfg);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal.Unhandled: %s\n", e.what());
    return 1;
  }
  return 0;
}
