#include "stereodistill/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "stereodistill/distill.hpp"
#include "stereodistill/errors.hpp"
#include "stereodistill/evaluation.hpp"

#ifndef STEREODISTILL_VERSION
#define STEREODISTILL_VERSION "dev"
#endif

namespace stereodistill {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = [] {
    std::vector<AblationRow> r;
    AblationRow a;
    a.index = 1;
    a.points = {Term::spw};
    a.losses = {{Term::spw, LossKind::log_l1}};
    r.push_back(a);
    const std::pair<Term, LossKind> added[] = {{Term::cv, LossKind::cosine},
                                               {Term::fe, LossKind::cosine},
                                               {Term::stpw, LossKind::smooth_l1},
                                               {Term::ca, LossKind::kld}};
    for (const auto& [t, k] : added) {
      ++a.index;
      a.points.push_back(t);
      a.losses[t] = k;
      r.push_back(a);
    }
    ++a.index;
    a.attention = true;
    r.push_back(a);
    return r;
  }();
  return rows;
}

namespace {

// Flag values land here, then become a JSON patch over the config file so
// that each flag owns exactly one config key.
struct Overrides {
  std::optional<std::string> preset, backbone;
  std::optional<int> num_ed, base_channels, max_disp, groups;
  std::optional<bool> attention, negate_logits, upsample_before_head, attention_softmax, fe_taps_both_views;

  std::optional<double> lambda_fe, lambda_cv, lambda_ca, lambda_spw, lambda_stpw;
  std::vector<double> ed_weights;

  std::optional<int> epochs, batch_size, crop_height, crop_width;
  std::optional<double> lr, lr_decay, beta1, beta2;
  std::vector<int> lr_milestones;
  std::optional<uint64_t> seed;
  std::optional<std::string> dataset, train_split, val_split, teacher, points, losses, norm_mode;
  std::optional<bool> cache_teacher, checkpoint_every_epoch;

  std::string config_path;
};

void add_model_flags(CLI::App* app, Overrides& o) {
  app->add_option("--preset", o.preset, "model.preset: variant name, e.g. BB21-ED2-N16, DSNet, DSNet+Attention");
  app->add_option("--backbone", o.backbone, "model.backbone: BB14 | BB18 | BB21");
  app->add_option("--num-ed", o.num_ed, "model.num_ed_networks: encoder-decoder count (1-3)");
  app->add_option("--base-channels", o.base_channels, "model.base_channels: 3-D filter count N");
  app->add_option("--max-disp", o.max_disp, "model.max_disparity: D in full-resolution pixels");
  app->add_option("--groups", o.groups, "model.correlation_groups");
  app->add_option("--attention", o.attention, "model.use_attention: true | false");
  app->add_option("--negate-logits", o.negate_logits, "model.negate_logits: softmax over the negated volume");
  app->add_option("--upsample-before-head", o.upsample_before_head, "model.upsample_before_head");
  app->add_option("--attention-softmax", o.attention_softmax, "model.attention_softmax: softmax gating over d");
  app->add_option("--fe-taps-both-views", o.fe_taps_both_views, "model.fe_taps_both_views");
}

void add_experiment_flags(CLI::App* app, Overrides& o, bool with_teacher) {
  app->add_option("--config", o.config_path, "experiment JSON; flags override its values")->check(CLI::ExistingFile);
  add_model_flags(app, o);
  app->add_option("--lambda-fe", o.lambda_fe, "objective.lambda_fe");
  app->add_option("--lambda-cv", o.lambda_cv, "objective.lambda_cv");
  app->add_option("--lambda-ca", o.lambda_ca, "objective.lambda_ca");
  app->add_option("--lambda-spw", o.lambda_spw, "objective.lambda_spw");
  app->add_option("--lambda-stpw", o.lambda_stpw, "objective.lambda_stpw");
  app->add_option("--ed-weights", o.ed_weights, "objective.intermediate_output_weights, comma separated")
      ->delimiter(',');
  app->add_option("--epochs", o.epochs, "train.epochs");
  app->add_option("--batch-size", o.batch_size, "train.batch_size");
  app->add_option("--lr", o.lr, "train.initial_lr");
  app->add_option("--lr-milestones", o.lr_milestones, "train.lr_milestones: 0-based epochs, comma separated")
      ->delimiter(',');
  app->add_option("--lr-decay", o.lr_decay, "train.lr_decay_factor");
  app->add_option("--adam-beta1", o.beta1, "train.adam_beta1");
  app->add_option("--adam-beta2", o.beta2, "train.adam_beta2");
  app->add_option("--crop-height", o.crop_height, "train.crop_height");
  app->add_option("--crop-width", o.crop_width, "train.crop_width");
  app->add_option("--seed", o.seed, "train.seed");
  app->add_option("--dataset", o.dataset, "train.dataset: directory with manifest.json");
  app->add_option("--train-split", o.train_split, "train.train_split");
  app->add_option("--val-split", o.val_split, "train.val_split (empty disables validation)");
  if (with_teacher) {
    app->add_option("--teacher", o.teacher, "train.teacher: oracle | checkpoint:PATH | taps:PATH");
    app->add_option("--points", o.points, "train.points: comma separated subset of spw,stpw,fe,cv,ca");
  }
  app->add_option("--losses", o.losses, "train.losses: e.g. spw=logl1,cv=cosine");
  app->add_option("--norm-mode", o.norm_mode, "train.norm_mode: batch | running")
      ->check(CLI::IsMember({"batch", "running"}));
  app->add_option("--cache-teacher", o.cache_teacher, "train.cache_teacher: true | false");
  app->add_option("--checkpoint-every-epoch", o.checkpoint_every_epoch, "train.checkpoint_every_epoch");
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ExperimentConfig build_experiment(const Overrides& o, bool supervised = false) {
  json base = o.config_path.empty() ? json::object() : read_json_file(o.config_path);
  if (!base.is_object()) throw ConfigError("experiment config must be a JSON object");
  json patch = {{"model", json::object()}, {"objective", json::object()}, {"train", json::object()}};
  json& m = patch["model"];
  if (o.preset) {
    // A preset replaces the file's architecture wholesale.
    base["model"] = json::object();
    m["preset"] = *o.preset;
  }
  put(m, "backbone", o.backbone);
  put(m, "num_ed_networks", o.num_ed);
  put(m, "base_channels", o.base_channels);
  put(m, "max_disparity", o.max_disp);
  put(m, "correlation_groups", o.groups);
  put(m, "use_attention", o.attention);
  put(m, "negate_logits", o.negate_logits);
  put(m, "upsample_before_head", o.upsample_before_head);
  put(m, "attention_softmax", o.attention_softmax);
  put(m, "fe_taps_both_views", o.fe_taps_both_views);
  json& w = patch["objective"];
  put(w, "lambda_fe", o.lambda_fe);
  put(w, "lambda_cv", o.lambda_cv);
  put(w, "lambda_ca", o.lambda_ca);
  put(w, "lambda_spw", o.lambda_spw);
  put(w, "lambda_stpw", o.lambda_stpw);
  if (!o.ed_weights.empty()) w["intermediate_output_weights"] = o.ed_weights;
  json& t = patch["train"];
  put(t, "epochs", o.epochs);
  put(t, "batch_size", o.batch_size);
  put(t, "initial_lr", o.lr);
  if (!o.lr_milestones.empty()) t["lr_milestones"] = o.lr_milestones;
  put(t, "lr_decay_factor", o.lr_decay);
  put(t, "adam_beta1", o.beta1);
  put(t, "adam_beta2", o.beta2);
  put(t, "crop_height", o.crop_height);
  put(t, "crop_width", o.crop_width);
  put(t, "seed", o.seed);
  put(t, "dataset", o.dataset);
  put(t, "train_split", o.train_split);
  put(t, "val_split", o.val_split);
  put(t, "teacher", o.teacher);
  put(t, "points", o.points);
  if (o.losses) {
    json l = json::object();
    for (auto [term, kind] : DistillPlan::parse_losses(*o.losses)) l[to_string(term)] = to_string(kind);
    t["losses"] = l;
  }
  put(t, "norm_mode", o.norm_mode);
  put(t, "cache_teacher", o.cache_teacher);
  put(t, "checkpoint_every_epoch", o.checkpoint_every_epoch);
  // A string-valued losses entry in the file cannot be merged key-wise.
  if (base.contains("train") && base["train"].contains("losses") && base["train"]["losses"].is_string()) {
    json l = json::object();
    for (auto [term, kind] : DistillPlan::parse_losses(base["train"]["losses"].get<std::string>())) {
      l[to_string(term)] = to_string(kind);
    }
    base["train"]["losses"] = l;
  }
  for (const char* section : {"model", "objective", "train"}) {
    if (patch[section].empty()) patch.erase(section);
  }
  base.merge_patch(patch);
  ExperimentConfig e = experiment_from_json(base);
  if (supervised) {
    e.train.plan.points = {Term::spw};
    e.train.teacher = TeacherSpec{};
  }
  e.validate();
  return e;
}

MetricReport evaluate_samples(StereoNet& net, const std::vector<StereoSample>& samples) {
  MetricAccumulator acc;
  for (const auto& s : samples) {
    const PreparedSample p = prepare_full(s, net.config().max_disparity, 4);
    const Batch b = make_batch({p});
    Tensor pred = net.predict(b.left, b.right);
    pred.reshape(p.disparity.shape());
    acc.add(pred, p.disparity, p.valid);
  }
  return acc.report();
}

// Top-left h x w window of a [.., H, W] tensor, as [h, w].
Tensor crop_plane(const Tensor& t, int64_t h, int64_t w) {
  const int64_t W = t.dim(t.rank() - 1);
  Tensor out({h, w});
  for (int64_t y = 0; y < h; ++y) std::copy(t.data() + y * W, t.data() + y * W + w, out.data() + y * w);
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
  if (!f) throw IoError("cannot write '" + p.string() + "'");
}

std::string join_points(const std::vector<Term>& pts) {
  std::string s;
  for (Term t : pts) s += (s.empty() ? "" : ";") + to_string(t);
  return s;
}

std::string join_losses(const std::vector<Term>& pts, const std::map<Term, LossKind>& losses) {
  std::string s;
  for (Term t : pts) s += (s.empty() ? "" : ";") + to_string(t) + "=" + to_string(losses.at(t));
  return s;
}

// ------------------------------------------------------------ commands

CommandResult cmd_gen_data(const std::string& out_dir, const GenerateOptions& g, std::ostream& out) {
  const DatasetManifest m = generate_dataset(out_dir, g);
  out << "wrote " << m.samples.size() << " samples to " << out_dir << "\n";
  return {exit_code::ok, {(fs::path(out_dir) / "manifest.json").string()}};
}

CommandResult cmd_train(const ExperimentConfig& e, const std::string& out_dir, std::ostream& out) {
  out << "model " << e.model.name() << ", teacher " << e.train.teacher.to_string() << ", points "
      << join_points(e.train.plan.points) << "\n";
  out << metrics_history_header() << "\n";
  const TrainResult r = train(e, out_dir, [&](const EpochMetrics& m) { out << metrics_history_row(m) << "\n" << std::flush; });
  return {exit_code::ok, {(fs::path(out_dir) / "run.json").string(), r.metrics_csv, r.final_checkpoint}};
}

struct EvaluateArgs {
  std::string checkpoint, predictions, dataset, split = "test", out;
  std::optional<int> max_disp;
  bool images = false;
  float max_error = 3.0f;
};

CommandResult cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() == a.predictions.empty()) {
    throw ConfigError("give exactly one of --checkpoint and --predictions");
  }
  // Everything is loaded and checked before the output directory exists.
  const DatasetManifest manifest = load_manifest(a.dataset);
  std::unique_ptr<StereoNet> net;
  if (!a.checkpoint.empty()) {
    if (!fs::exists(a.checkpoint)) throw IoError("checkpoint '" + a.checkpoint + "' does not exist");
    net = load_model(a.checkpoint);
    if (manifest.max_disparity > net->config().max_disparity) {
      throw ShapeError("dataset disparities reach " + std::to_string(manifest.max_disparity) + " but " +
                       net->config().name() + " covers " + std::to_string(net->config().max_disparity));
    }
  } else if (!fs::is_directory(a.predictions)) {
    throw IoError("predictions directory '" + a.predictions + "' does not exist");
  }
  std::optional<float> bound;
  if (a.max_disp) bound = static_cast<float>(*a.max_disp);
  else if (net) bound = static_cast<float>(net->config().max_disparity);

  struct Row {
    std::string id;
    MetricReport report;
    Tensor pred;
    StereoSample sample;
    Mask mask;
  };
  std::vector<Row> rows;
  MetricAccumulator all;
  for (const auto& e : manifest.samples) {
    if (e.split != a.split) continue;
    Row r;
    r.id = e.id;
    r.sample = load_sample(manifest, e);
    const int64_t h = r.sample.height(), w = r.sample.width();
    if (net) {
      const PreparedSample p = prepare_full(r.sample, net->config().max_disparity, 4);
      const Batch b = make_batch({p});
      r.pred = crop_plane(net->predict(b.left, b.right), h, w);
    } else {
      const fs::path pp = fs::path(a.predictions) / (e.id + ".pfm");
      if (!fs::exists(pp)) throw IoError("missing prediction '" + pp.string() + "'");
      r.pred = read_pfm_disparity(pp.string());
      if (r.pred.shape() != r.sample.disparity.shape()) {
        throw ShapeError("prediction " + pp.string() + " is " + to_string(r.pred.shape()) + ", ground truth is " +
                         to_string(r.sample.disparity.shape()));
      }
    }
    r.mask.resize(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h * w; ++i) {
      const float g = r.sample.disparity[i];
      r.mask[static_cast<size_t>(i)] = r.sample.valid[static_cast<size_t>(i)] && std::isfinite(g) && (!bound || g < *bound);
    }
    r.report = evaluate_metrics(r.pred, r.sample.disparity, r.mask);
    all.add(r.pred, r.sample.disparity, r.mask);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError("split '" + a.split + "' of " + a.dataset + " is empty");

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) throw IoError("cannot create output directory '" + a.out + "'");
  std::ostringstream csv;
  csv << metrics_csv_header() << "\n";
  for (const auto& r : rows) csv << metrics_csv_row(r.id, r.report) << "\n";
  const MetricReport total = all.report();
  csv << metrics_csv_row("all", total) << "\n";
  const fs::path csv_path = fs::path(a.out) / "metrics.csv";
  write_text(csv_path, csv.str());
  CommandResult res{exit_code::ok, {csv_path.string()}};
  if (a.images) {
    const float scale = bound ? *bound : static_cast<float>(std::max(manifest.max_disparity, 1));
    for (const auto& r : rows) {
      write_png_rgb((fs::path(a.out) / (r.id + "_disp.png")).string(), disparity_image(r.pred, scale));
      write_png_rgb((fs::path(a.out) / (r.id + "_error.png")).string(),
                    error_map_image(r.pred, r.sample.disparity, r.mask, a.max_error));
    }
  }
  char line[256];
  std::snprintf(line, sizeof line, "EPE %.4f px  D1 %.3f %%  1px %.3f %%  3px %.3f %%  (%lld pixels)\n", total.epe_px,
                total.d1_percent, total.kpx_percent.at(1), total.kpx_percent.at(3),
                static_cast<long long>(total.n_valid));
  out << line;
  return res;
}

struct ProfileArgs {
  std::string preset = "DSNet";
  int64_t height = 544, width = 960;
  std::string mode = "infer";
  bool per_layer = false;
  std::string csv;
};

CommandResult cmd_profile(const ProfileArgs& a, const Overrides& o, std::ostream& out) {
  ModelConfig cfg = preset(a.preset);
  if (o.attention) cfg.use_attention = *o.attention;
  if (o.max_disp) cfg.max_disparity = *o.max_disp;
  cfg.validate();
  const ComplexityReport r =
      profile_model(cfg, a.height, a.width, a.mode == "train" ? PredictMode::train : PredictMode::infer);
  out << complexity_table(r);
  CommandResult res;
  if (!a.csv.empty()) {
    write_text(a.csv, complexity_csv(r, a.per_layer));
    res.artifacts.push_back(a.csv);
  }
  return res;
}

struct ExportArgs {
  std::string teacher, dataset, split = "train", points = "cv,ca,disparity", out;
  std::optional<int> max_disp;
};

CommandResult cmd_export_taps(const ExportArgs& a, std::ostream& out) {
  const TeacherSpec spec = TeacherSpec::parse(a.teacher);
  if (spec.kind == TeacherSpec::Kind::none) throw ConfigError("--teacher is required");
  if (spec.kind == TeacherSpec::Kind::taps) throw ConfigError("a tap file cannot be re-exported");
  const DatasetManifest m = load_manifest(a.dataset);
  ModelConfig cfg;
  std::unique_ptr<Teacher> teacher;
  int max_disp = a.max_disp.value_or(m.max_disparity > 0 ? m.max_disparity : cfg.max_disparity);
  if (spec.kind == TeacherSpec::Kind::checkpoint) {
    auto t = ModelTeacher::from_checkpoint(spec.path, false);
    if (!a.max_disp) max_disp = t->network().config().max_disparity;
    teacher = std::move(t);
  } else {
    cfg.max_disparity = max_disp;
    teacher = make_teacher(spec, cfg, false);
  }
  std::set<DistillPoint> points;
  std::stringstream ss(a.points);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) points.insert(parse_distill_point(item));
  }
  if (points.empty()) throw ConfigError("--points selects nothing");
  export_taps(*teacher, a.dataset, a.split, a.out, max_disp, points);
  out << "wrote taps of " << teacher->describe() << " to " << a.out << "\n";
  return {exit_code::ok, {a.out}};
}

CommandResult cmd_ablate(const ExperimentConfig& base, const std::string& rows_sel, const std::string& out_dir,
                         std::ostream& out) {
  std::set<int> wanted;
  std::stringstream ss(rows_sel);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    try {
      const int lo = std::stoi(item.substr(0, dash));
      const int hi = dash == std::string::npos ? lo : std::stoi(item.substr(dash + 1));
      for (int i = lo; i <= hi; ++i) wanted.insert(i);
    } catch (const std::logic_error&) {
      throw ConfigError("bad --rows entry '" + item + "'");
    }
  }
  const auto& rows = ablation_rows();
  for (int i : wanted) {
    if (i < 1 || i > static_cast<int>(rows.size())) throw ConfigError("ablation rows are 1.." + std::to_string(rows.size()));
  }
  // Validate every row before spending time on the first.
  std::vector<ExperimentConfig> exps;
  for (const auto& row : rows) {
    if (!wanted.count(row.index)) continue;
    ExperimentConfig e = base;
    e.train.plan.points = row.points;
    for (auto [t, k] : row.losses) e.train.plan.losses[t] = k;
    e.model.use_attention = row.attention;
    e.validate();
    StereoNet probe(e.model);
    std::unique_ptr<Teacher> t = make_teacher(e.train.teacher, e.model, false);
    DistillOptions opt;
    opt.weights = e.objective;
    opt.plan = e.train.plan;
    Distiller check(probe, t.get(), opt);
    exps.push_back(e);
  }
  if (base.train.val_split.empty()) throw ConfigError("ablation needs a validation split to score rows");
  const std::vector<StereoSample> test = load_split(base.train.dataset, base.train.val_split);
  if (test.empty()) throw ConfigError("split '" + base.train.val_split + "' is empty");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory '" + out_dir + "'");
  const fs::path csv_path = fs::path(out_dir) / "ablation.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write '" + csv_path.string() + "'");
  csv << "row,points,losses,attention,epe,d1,px1,px2,px3,px4\n";
  CommandResult res{exit_code::ok, {csv_path.string()}};
  size_t k = 0;
  for (const auto& row : rows) {
    if (!wanted.count(row.index)) continue;
    const ExperimentConfig& e = exps[k++];
    const fs::path dir = fs::path(out_dir) / ("row" + std::to_string(row.index));
    out << "row " << row.index << ": " << join_losses(row.points, e.train.plan.losses)
        << (row.attention ? " +attention" : "") << "\n";
    const TrainResult r = train(e, dir.string());
    auto net = load_model(r.final_checkpoint);
    const MetricReport m = evaluate_samples(*net, test);
    char line[512];
    std::snprintf(line, sizeof line, "%d,%s,%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.index,
                  join_points(row.points).c_str(), join_losses(row.points, e.train.plan.losses).c_str(),
                  row.attention ? 1 : 0, m.epe_px, m.d1_percent, m.kpx_percent.at(1), m.kpx_percent.at(2),
                  m.kpx_percent.at(3), m.kpx_percent.at(4));
    csv << line << std::flush;
    out << "  test EPE " << m.epe_px << "\n";
  }
  if (!csv) throw IoError("failed writing '" + csv_path.string() + "'");
  return res;
}

}  // namespace

CommandResult run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-distillation toolkit for compact stereo matching networks", "stereodistill"};
  app.set_version_flag("--version", std::string(STEREODISTILL_VERSION));
  app.require_subcommand(1);

  GenerateOptions gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic stereo dataset");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--count", gen.count, "number of samples")->required();
  gen_cmd->add_option("--test-count", gen.test_count, "samples (taken from the end) in the test split");
  gen_cmd->add_option("--height", gen.height, "image height, multiple of 4")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "image width, multiple of 4")->capture_default_str();
  gen_cmd->add_option("--max-disp", gen.max_disparity, "disparities stay below this")->capture_default_str();
  gen_cmd->add_option("--max-objects", gen.max_objects, "foreground rectangles per pair, at most")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "dataset seed")->capture_default_str();

  Overrides train_o, distill_o, ablate_o, profile_o;
  std::string train_out, distill_out, ablate_out, ablate_rows = "1-6";
  auto* train_cmd = app.add_subcommand("train", "Supervised training (points = spw, no teacher)");
  add_experiment_flags(train_cmd, train_o, false);
  train_cmd->add_option("--out", train_out, "run directory")->required();
  auto* distill_cmd = app.add_subcommand("distill", "Train a student against a teacher");
  add_experiment_flags(distill_cmd, distill_o, true);
  distill_cmd->add_option("--out", distill_out, "run directory")->required();

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "EPE, D1 and K-px on a dataset split");
  auto* ck = eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint (.sdck)");
  auto* pr = eval_cmd->add_option("--predictions", ev.predictions, "directory of <id>.pfm predictions");
  ck->excludes(pr);
  eval_cmd->add_option("--dataset", ev.dataset, "dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "split to score")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "report directory")->required();
  eval_cmd->add_option("--max-disp", ev.max_disp, "score only pixels with ground truth below this");
  eval_cmd->add_flag("--images", ev.images, "also write disparity and error-map PNGs");
  eval_cmd->add_option("--max-error", ev.max_error, "error (px) mapped to full red")->capture_default_str();

  ProfileArgs pa;
  auto* prof_cmd = app.add_subcommand("profile", "Analytic parameter and MAC counts");
  prof_cmd->add_option("--preset", pa.preset, "variant name")->capture_default_str();
  prof_cmd->add_option("--height", pa.height, "input height")->capture_default_str();
  prof_cmd->add_option("--width", pa.width, "input width")->capture_default_str();
  prof_cmd->add_option("--mode", pa.mode, "infer: final head only; train: every head")
      ->check(CLI::IsMember({"infer", "train"}))
      ->capture_default_str();
  prof_cmd->add_option("--attention", profile_o.attention, "override model.use_attention");
  prof_cmd->add_option("--max-disp", profile_o.max_disp, "override model.max_disparity");
  prof_cmd->add_flag("--per-layer", pa.per_layer, "per-layer rows in the CSV");
  prof_cmd->add_option("--csv", pa.csv, "write the report as CSV");

  ExportArgs ex;
  auto* exp_cmd = app.add_subcommand("export-taps", "Record teacher taps for later replay");
  exp_cmd->add_option("--teacher", ex.teacher, "oracle | checkpoint:PATH")->required();
  exp_cmd->add_option("--dataset", ex.dataset, "dataset directory")->required();
  exp_cmd->add_option("--split", ex.split, "split to export")->capture_default_str();
  exp_cmd->add_option("--points", ex.points, "fe_early,cost_volume,cost_aggregation,disparity (or fe,cv,ca,disp)")
      ->capture_default_str();
  exp_cmd->add_option("--max-disp", ex.max_disp, "oracle range (defaults to the dataset's)");
  exp_cmd->add_option("--out", ex.out, "tap file")->required();

  auto* abl_cmd = app.add_subcommand("ablate", "Train each loss/point ablation row and tabulate test metrics");
  add_experiment_flags(abl_cmd, ablate_o, true);
  abl_cmd->add_option("--rows", ablate_rows, "rows to run, e.g. 1-6 or 1,5")->capture_default_str();
  abl_cmd->add_option("--out", ablate_out, "output directory")->required();

  std::vector<std::string> argv_store{"stereodistill"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return {exit_code::ok, {}};
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return {exit_code::ok, {}};
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return {exit_code::ok, {}};
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return {exit_code::config, {}};
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen_out, gen, out);
    if (*train_cmd) {
      return cmd_train(build_experiment(train_o, true), train_out, out);
    }
    if (*distill_cmd) return cmd_train(build_experiment(distill_o), distill_out, out);
    if (*eval_cmd) return cmd_evaluate(ev, out);
    if (*prof_cmd) return cmd_profile(pa, profile_o, out);
    if (*exp_cmd) return cmd_export_taps(ex, out);
    if (*abl_cmd) return cmd_ablate(build_experiment(ablate_o), ablate_rows, ablate_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return {exit_code::config, {}};
  } catch (const CapabilityError& e) {
    err << "capability error: " << e.what() << "\n";
    return {exit_code::capability, {}};
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return {exit_code::capability, {}};
  } catch (const DomainError& e) {
    err << "data error: " << e.what() << "\n";
    return {exit_code::capability, {}};
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return {exit_code::io, {}};
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return {exit_code::failure, {}};
  }
  return {exit_code::failure, {}};
}

}  // namespace stereodistill
