#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "vern/errors.hpp"
#include "vern/graph.hpp"
#include "vern/metrics.hpp"
#include "vern/model.hpp"
#include "vern/training.hpp"
#include "vern/wsi_data.hpp"

namespace vern::cli {
namespace fs = std::filesystem;

namespace {

constexpr const char* kOutDirEnv = "VERN_OUT_DIR";

std::string default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env != nullptr && *env != '\0' ? env : "vern_out";
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

const ModelDims kFeatureDims{kDimA, kDimB, 0, 0};

VernParams load_model_for_features(const fs::path& path) {
  VernParams p = load_checkpoint(path);
  if (p.dims.dim_a != kFeatureDims.dim_a || p.dims.dim_b != kFeatureDims.dim_b) {
    throw CheckpointError(path.string() + ": checkpoint expects feature dims (" + std::to_string(p.dims.dim_a) + ", " +
                          std::to_string(p.dims.dim_b) + "), features are (1024, 768)");
  }
  return p;
}

struct Scored {
  const SlideEntry* entry;
  double prob;
};

std::vector<Scored> score_dataset(const Dataset& ds, const VernParams& p, std::size_t k) {
  std::vector<Scored> out;
  for (const auto& e : ds.entries) {
    const auto records = load_slide(e);
    const WsiGraph g = build_wsi_graph(records, k, e.label, e.slide_id);
    out.push_back({&e, vern_forward(g, p, Mode::eval).prob});
  }
  return out;
}

// --- synth ---------------------------------------------------------------

struct SynthOpts {
  std::string out = default_out_dir();
  std::size_t slides = 20;
  std::uint64_t seed = 0;
  double signal = 2.0;
  std::size_t min_patches = 20;
  std::size_t max_patches = 40;
};

int cmd_synth(const SynthOpts& o, std::ostream& out) {
  SynthConfig cfg;
  cfg.n_slides = o.slides;
  cfg.seed = o.seed;
  cfg.signal_strength = o.signal;
  cfg.patches_min = o.min_patches;
  cfg.patches_max = o.max_patches;
  const auto res = synth_dataset(cfg, o.out);
  std::size_t patches = 0;
  for (const auto& e : res.dataset.entries) patches += e.patch_count;
  out << "wrote " << res.dataset.entries.size() << " slides (" << res.dataset.count_label(1) << " STAS, "
      << res.dataset.count_label(0) << " non-STAS, " << patches << " patches) to " << o.out << "\n";
  return kOk;
}

// --- train ---------------------------------------------------------------

struct TrainOpts {
  std::string manifest;
  std::string out = default_out_dir();
  std::size_t folds = 5;
  std::size_t epochs = 200;
  double lr = 0.001;
  double alpha = 0.9;
  std::uint64_t seed = 0;
  std::size_t hidden = 512;
  std::size_t embed = 256;
  std::size_t k = kDefaultNeighbours;
  std::size_t threads = 1;
  double pos_weight = 1.0;
};

int cmd_train(const TrainOpts& o, std::ostream& out) {
  const Dataset ds = load_manifest(o.manifest);
  for (const auto& e : ds.entries) {
    if (!e.label) throw DataError("train: slide '" + e.slide_id + "' has no label");
  }
  if (ds.count_label(0) == 0 || ds.count_label(1) == 0) throw DataError("train: dataset must contain both classes");

  TrainConfig cfg;
  cfg.folds = o.folds;
  cfg.epochs = o.epochs;
  cfg.lr = o.lr;
  cfg.alpha = o.alpha;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.pos_weight = o.pos_weight;
  cfg.dims = {kDimA, kDimB, o.hidden, o.embed};
  cfg.validate();

  const auto graphs = load_graphs(ds, o.k);
  const CvResult cv = run_cv(graphs, cfg);

  ensure_dir(o.out);
  const CheckpointMeta meta = {{"lr", num(cfg.lr)},         {"alpha", num(cfg.alpha)},
                               {"epochs", std::to_string(cfg.epochs)}, {"batch_size", "1"},
                               {"dropout", num(kEncoderDropout)},      {"knn_k", std::to_string(o.k)},
                               {"cv_seed", std::to_string(cfg.seed)},  {"folds", std::to_string(cfg.folds)}};
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    CheckpointMeta m = meta;
    m["fold"] = std::to_string(f);
    m["best_epoch"] = std::to_string(cv.folds[f].best_epoch);
    m["best_val_auroc"] = cv.folds[f].best_val_auroc ? num(*cv.folds[f].best_val_auroc) : "undefined";
    save_checkpoint(cv.folds[f].best, fs::path(o.out) / ("fold" + std::to_string(f) + ".ckpt"), m);
  }
  {
    auto os = open_out(fs::path(o.out) / "train_log.csv");
    write_training_log(os, cv);
  }
  {
    auto os = open_out(fs::path(o.out) / "cv_report.txt");
    os << format_cv_report(cv);
  }
  {
    auto os = open_out(fs::path(o.out) / "cv_predictions.csv");
    os << "slide_id,fold,label,prob\n";
    for (const auto& p : cv.val_predictions) os << p.slide_id << "," << p.fold << "," << p.label << "," << num(p.prob) << "\n";
  }
  const auto& s = cv.summary;
  out << "trained " << cv.folds.size() << " folds on " << graphs.size() << " slides\n";
  for (const char* metric : {"accuracy", "precision", "recall", "f1", "specificity", "auroc", "auprc"}) {
    const auto it = s.find(metric);
    if (it == s.end()) continue;
    char line[128];
    std::snprintf(line, sizeof line, "  %-12s %.4f +- %.4f\n", metric, it->second.mean, it->second.std);
    out << line;
  }
  return kOk;
}

// --- eval ----------------------------------------------------------------

struct EvalOpts {
  std::string manifest;
  std::string checkpoint;
  std::string out = default_out_dir();
  double threshold = 0.5;
  std::size_t k = kDefaultNeighbours;
};

EvalReport report_for(const std::vector<Scored>& scored, const std::function<bool(const SlideEntry&)>& keep,
                      double threshold) {
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& s : scored) {
    if (!keep(*s.entry)) continue;
    probs.push_back(s.prob);
    labels.push_back(*s.entry->label);
  }
  return evaluate(probs, labels, threshold);
}

int cmd_eval(const EvalOpts& o, std::ostream& out) {
  const Dataset ds = load_manifest(o.manifest);
  for (const auto& e : ds.entries) {
    if (!e.label) throw DataError("eval: slide '" + e.slide_id + "' has no label");
  }
  const VernParams p = load_model_for_features(o.checkpoint);
  const auto scored = score_dataset(ds, p, o.k);
  ensure_dir(o.out);

  const EvalReport overall = report_for(scored, [](const SlideEntry&) { return true; }, o.threshold);
  write_report(overall, "evaluation: all slides", (fs::path(o.out) / "eval_report.txt").string());
  out << format_report(overall, "evaluation: all slides");
  for (SectionKind kind : {SectionKind::frozen, SectionKind::paraffin}) {
    const auto keep = [kind](const SlideEntry& e) { return e.section_kind == kind; };
    if (std::none_of(ds.entries.begin(), ds.entries.end(), keep)) continue;
    const EvalReport r = report_for(scored, keep, o.threshold);
    const std::string name = std::string(to_string(kind));
    write_report(r, "evaluation: " + name + " sections", (fs::path(o.out) / ("eval_report_" + name + ".txt")).string());
  }
  auto os = open_out(fs::path(o.out) / "eval_scores.csv");
  os << "slide_id,label,section_kind,prob\n";
  for (const auto& s : scored) {
    os << s.entry->slide_id << "," << *s.entry->label << "," << to_string(s.entry->section_kind) << "," << num(s.prob)
       << "\n";
  }
  return kOk;
}

// --- predict -------------------------------------------------------------

struct PredictOpts {
  std::string manifest;
  std::string checkpoint;
  std::string out = default_out_dir();
  double threshold = 0.5;
  std::size_t k = kDefaultNeighbours;
};

int cmd_predict(const PredictOpts& o, std::ostream& out) {
  const Dataset ds = load_manifest(o.manifest);
  const VernParams p = load_model_for_features(o.checkpoint);
  const auto scored = score_dataset(ds, p, o.k);
  ensure_dir(o.out);

  auto os = open_out(fs::path(o.out) / "predictions.csv");
  os << "slide_id,prob,predicted_label\n";
  std::size_t positives = 0;
  for (const auto& s : scored) {
    const int predicted = s.prob >= o.threshold ? 1 : 0;
    positives += static_cast<std::size_t>(predicted);
    os << s.entry->slide_id << "," << num(s.prob) << "," << predicted << "\n";
  }
  out << "predicted " << positives << " of " << scored.size() << " slides STAS-positive\n";

  if (ds.has_patient_ids()) {
    // A patient is flagged when any of their slides is predicted positive.
    std::map<std::string, int> flags;
    for (const auto& s : scored) {
      if (!s.entry->patient_id) continue;
      int& flag = flags[*s.entry->patient_id];
      flag = flag | (s.prob >= o.threshold ? 1 : 0);
    }
    auto ps = open_out(fs::path(o.out) / "patients.csv");
    ps << "patient_id,patient_flag\n";
    for (const auto& [pid, flag] : flags) ps << pid << "," << flag << "\n";
  }
  return kOk;
}

// --- heatmap -------------------------------------------------------------

struct HeatmapOpts {
  std::string manifest;
  std::string checkpoint;
  std::string slide_id;
  std::string out = default_out_dir();
  bool png = false;
  std::size_t k = kDefaultNeighbours;
};

int cmd_heatmap(const HeatmapOpts& o, std::ostream& out, std::ostream& err) {
  const Dataset ds = load_manifest(o.manifest);
  const SlideEntry* entry = ds.find(o.slide_id);
  if (entry == nullptr) {
    err << "heatmap: slide '" << o.slide_id << "' not in manifest\n";
    return kUsage;
  }
  const VernParams p = load_model_for_features(o.checkpoint);
  const auto records = load_slide(*entry);
  const WsiGraph g = build_wsi_graph(records, o.k, entry->label, entry->slide_id);
  const VernOutput res = vern_forward(g, p, Mode::eval);
  ensure_dir(o.out);

  const fs::path base = fs::path(o.out) / o.slide_id;
  {
    auto os = open_out(base.string() + "_heatmap.csv");
    os << "patch_id,x,y,contribution\n";
    for (std::size_t i = 0; i < g.size(); ++i) {
      os << g.patch_ids[i] << "," << num(g.coords[i].x) << "," << num(g.coords[i].y) << "," << num(res.contributions[i])
         << "\n";
    }
  }
  {
    auto os = open_out(base.string() + "_top9.txt");
    os << "rank,patch_id,contribution\n";
    for (std::size_t r = 0; r < res.top_patches.size(); ++r) {
      const std::size_t i = res.top_patches[r];
      os << r + 1 << "," << g.patch_ids[i] << "," << num(res.contributions[i]) << "\n";
    }
  }
  if (o.png) {
    std::vector<double> xs, ys;
    for (const auto& c : g.coords) {
      xs.push_back(c.x);
      ys.push_back(c.y);
    }
    write_heatmap_png(base.string() + "_heatmap.png", xs, ys, res.contributions, res.top_patches);
  }
  out << "slide " << o.slide_id << ": prob " << num(res.prob) << ", " << g.size() << " patches, top "
      << res.top_patches.size() << " written to " << o.out << "\n";
  return kOk;
}

// --- convert-labels ------------------------------------------------------

struct ConvertOpts {
  std::string labels;
  std::string features_dir;
  std::string out;
  std::string id_col = "slide_id";
  std::string label_col = "label";
  std::string kind_col;
  std::string patient_col;
  std::string ext = ".wsgf";
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    if (!c.empty() && c.back() == '\r') c.pop_back();
  }
  return cells;
}

// Remaps columns of an external label listing into a manifest. Cell values
// are copied verbatim; load_manifest validates them.
int cmd_convert(const ConvertOpts& o, std::ostream& out) {
  std::ifstream is(o.labels);
  if (!is) throw IoError("cannot open label listing " + o.labels);
  std::string line;
  if (!std::getline(is, line)) throw ValidationError(o.labels + ": empty listing");
  const auto header = split(line);
  const auto column = [&](const std::string& name, bool required) -> std::ptrdiff_t {
    if (name.empty()) return -1;
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw ValidationError(o.labels + ": no column '" + name + "'");
      return -1;
    }
    return it - header.begin();
  };
  const auto id_i = column(o.id_col, true);
  const auto label_i = column(o.label_col, true);
  const auto kind_i = column(o.kind_col, !o.kind_col.empty());
  const auto patient_i = column(o.patient_col, !o.patient_col.empty());

  const fs::path out_path(o.out);
  const fs::path manifest_dir = out_path.parent_path();
  std::ostringstream body;
  body << "slide_id,label,section_kind,feature_path,patch_count" << (patient_i >= 0 ? ",patient_id" : "") << "\n";
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw ValidationError(o.labels + ": ragged row '" + line + "'");
    const std::string& id = cells[static_cast<std::size_t>(id_i)];
    const fs::path feature = fs::path(o.features_dir) / (id + o.ext);
    if (!fs::exists(feature)) throw IoError("slide '" + id + "': feature file not found: " + feature.string());
    const auto header_info = read_feature_header(feature);
    fs::path rel = feature;
    if (!manifest_dir.empty()) {
      const auto r = fs::absolute(feature).lexically_relative(fs::absolute(manifest_dir));
      if (!r.empty()) rel = r;
    }
    body << id << "," << cells[static_cast<std::size_t>(label_i)] << ","
         << (kind_i >= 0 ? cells[static_cast<std::size_t>(kind_i)] : "unknown") << "," << rel.generic_string() << ","
         << header_info.patch_count;
    if (patient_i >= 0) body << "," << cells[static_cast<std::size_t>(patient_i)];
    body << "\n";
    ++rows;
  }
  if (!manifest_dir.empty()) ensure_dir(manifest_dir);
  auto os = open_out(out_path);
  os << body.str();
  os.close();
  load_manifest(out_path);
  out << "wrote manifest with " << rows << " slides to " << o.out << "\n";
  return kOk;
}

// --- export-graph --------------------------------------------------------

struct ExportOpts {
  std::string manifest;
  std::string slide_id;
  std::string out = default_out_dir();
  std::size_t k = kDefaultNeighbours;
};

int cmd_export_graph(const ExportOpts& o, std::ostream& out, std::ostream& err) {
  const Dataset ds = load_manifest(o.manifest);
  const SlideEntry* entry = ds.find(o.slide_id);
  if (entry == nullptr) {
    err << "export-graph: slide '" << o.slide_id << "' not in manifest\n";
    return kUsage;
  }
  const auto records = load_slide(*entry);
  const WsiGraph g = build_wsi_graph(records, o.k, entry->label, entry->slide_id);
  export_graph_csv(g, o.out, o.slide_id);
  out << "slide " << o.slide_id << ": " << g.size() << " nodes, " << g.adj.edges.size() / 2 << " undirected edges\n";
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const UsageError*>(&e)) return kUsage;
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const CheckpointError*>(&e)) return kCheckpoint;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const StratificationError*>(&e) ||
      dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const FormatError*>(&e) || dynamic_cast<const MetricError*>(&e)) {
    return kData;
  }
  return 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatial graph STAS classifier: synthetic data, cross-validated training, evaluation, heatmaps"};
  app.require_subcommand(1);

  SynthOpts synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset with a planted signal");
  s->add_option("--out", synth.out, "Output directory (default $VERN_OUT_DIR or ./vern_out)");
  s->add_option("--slides", synth.slides, "Number of slides (>= 4)");
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--signal", synth.signal, "Planted-signal strength (>= 0)");
  s->add_option("--min-patches", synth.min_patches, "Minimum patches per slide (>= 3)");
  s->add_option("--max-patches", synth.max_patches, "Maximum patches per slide");

  TrainOpts train;
  auto* t = app.add_subcommand("train", "k-fold cross-validated training");
  t->add_option("--manifest", train.manifest, "Dataset manifest")->required();
  t->add_option("--out", train.out, "Output directory");
  t->add_option("--folds", train.folds, "Number of folds");
  t->add_option("--epochs", train.epochs, "Epochs per fold");
  t->add_option("--lr", train.lr, "RMSprop learning rate");
  t->add_option("--alpha", train.alpha, "RMSprop smoothing constant");
  t->add_option("--seed", train.seed, "Seed for folds, initialisation, shuffling and dropout");
  t->add_option("--hidden", train.hidden, "Hidden width after the graph convolution");
  t->add_option("--embed", train.embed, "Embedding width");
  t->add_option("--k", train.k, "Spatial neighbours per patch");
  t->add_option("--threads", train.threads, "Folds trained concurrently");
  t->add_option("--pos-weight", train.pos_weight, "Loss weight on positive slides");

  EvalOpts eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a labelled manifest");
  e->add_option("--manifest", eval.manifest, "Dataset manifest")->required();
  e->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required();
  e->add_option("--out", eval.out, "Output directory");
  e->add_option("--threshold", eval.threshold, "Decision threshold on the probability");
  e->add_option("--k", eval.k, "Spatial neighbours per patch");

  PredictOpts predict;
  auto* p = app.add_subcommand("predict", "Per-slide predictions and the patient-level rule");
  p->add_option("--manifest", predict.manifest, "Dataset manifest")->required();
  p->add_option("--checkpoint", predict.checkpoint, "Model checkpoint")->required();
  p->add_option("--out", predict.out, "Output directory");
  p->add_option("--threshold", predict.threshold, "Decision threshold on the probability");
  p->add_option("--k", predict.k, "Spatial neighbours per patch");

  HeatmapOpts heat;
  auto* h = app.add_subcommand("heatmap", "Per-patch contribution heatmap for one slide");
  h->add_option("--manifest", heat.manifest, "Dataset manifest")->required();
  h->add_option("--checkpoint", heat.checkpoint, "Model checkpoint")->required();
  h->add_option("--slide-id", heat.slide_id, "Slide to render")->required();
  h->add_option("--out", heat.out, "Output directory");
  h->add_flag("--png", heat.png, "Also render a PNG scatter raster");
  h->add_option("--k", heat.k, "Spatial neighbours per patch");

  ConvertOpts conv;
  auto* c = app.add_subcommand("convert-labels", "Build a manifest from a label listing and local feature files");
  c->add_option("--labels", conv.labels, "CSV label listing")->required();
  c->add_option("--features-dir", conv.features_dir, "Directory of <slide_id><ext> feature files")->required();
  c->add_option("--out", conv.out, "Manifest to write")->required();
  c->add_option("--id-col", conv.id_col, "Column holding the slide id");
  c->add_option("--label-col", conv.label_col, "Column holding the 0/1 label");
  c->add_option("--kind-col", conv.kind_col, "Column holding frozen/paraffin/unknown");
  c->add_option("--patient-col", conv.patient_col, "Column holding the patient id");
  c->add_option("--ext", conv.ext, "Feature file extension");

  ExportOpts exp;
  auto* x = app.add_subcommand("export-graph", "Write a slide's KNN graph as CSV for plotting");
  x->add_option("--manifest", exp.manifest, "Dataset manifest")->required();
  x->add_option("--slide-id", exp.slide_id, "Slide to export")->required();
  x->add_option("--out", exp.out, "Output directory");
  x->add_option("--k", exp.k, "Spatial neighbours per patch");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (p->parsed()) return cmd_predict(predict, out);
    if (h->parsed()) return cmd_heatmap(heat, out, err);
    if (c->parsed()) return cmd_convert(conv, out);
    if (x->parsed()) return cmd_export_graph(exp, out, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex);
  }
  return kUsage;
}

}  // namespace vern::cli
