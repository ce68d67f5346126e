#include "stereodistill/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "stereodistill/errors.hpp"

namespace stereodistill {

using nlohmann::json;

std::string to_string(BackboneVariant v) {
  switch (v) {
    case BackboneVariant::bb14: return "BB14";
    case BackboneVariant::bb18: return "BB18";
    case BackboneVariant::bb21: return "BB21";
  }
  return "?";
}

BackboneVariant parse_backbone(std::string_view s) {
  if (s == "BB14") return BackboneVariant::bb14;
  if (s == "BB18") return BackboneVariant::bb18;
  if (s == "BB21") return BackboneVariant::bb21;
  throw ConfigError("unknown backbone variant '" + std::string(s) + "' (expected BB14, BB18 or BB21)");
}

std::string ModelConfig::name() const {
  std::string n = to_string(backbone) + "-ED" + std::to_string(num_ed_networks) + "-N" +
                  std::to_string(base_channels);
  if (use_attention) n += "+attention";
  return n;
}

void ModelConfig::validate() const {
  if (max_disparity <= 0 || max_disparity % 4 != 0) {
    throw ConfigError("max_disparity must be a positive multiple of 4, got " +
                      std::to_string(max_disparity));
  }
  if ((max_disparity / 4) % 2 != 0) {
    throw ConfigError("max_disparity/4 must be even for the encoder-decoder skips, got " +
                      std::to_string(max_disparity / 4));
  }
  if (correlation_groups <= 0 || kFeatureChannels % correlation_groups != 0) {
    throw ConfigError("correlation_groups must divide " + std::to_string(kFeatureChannels) +
                      ", got " + std::to_string(correlation_groups));
  }
  if (num_ed_networks < 1 || num_ed_networks > 3) {
    throw ConfigError("num_ed_networks must be 1, 2 or 3, got " + std::to_string(num_ed_networks));
  }
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
}

namespace {

std::string valid_preset_hint() {
  return "valid presets: BB{14|18|21}-ED{1|2|3}-N{8|16|24|32} with optional '+attention', "
         "'DSNet', 'DSNet+Attention'";
}

}  // namespace

ModelConfig preset(std::string_view name) {
  std::string s(name);
  if (s == "DSNet") s = "BB21-ED2-N16";
  if (s == "DSNet+Attention") s = "BB21-ED2-N16+attention";
  static const std::regex re(R"(^(BB14|BB18|BB21)-ED([123])-N(8|16|24|32)(\+attention)?$)");
  std::smatch m;
  if (!std::regex_match(s, m, re)) {
    throw ConfigError("unknown preset '" + std::string(name) + "'; " + valid_preset_hint());
  }
  ModelConfig c;
  c.backbone = parse_backbone(m[1].str());
  c.num_ed_networks = std::stoi(m[2].str());
  c.base_channels = std::stoi(m[3].str());
  c.use_attention = m[4].matched;
  return c;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const char* bb : {"BB14", "BB18", "BB21"}) {
    for (int ed : {1, 2, 3}) {
      for (int n : {8, 16, 24, 32}) {
        out.push_back(std::string(bb) + "-ED" + std::to_string(ed) + "-N" + std::to_string(n));
      }
    }
  }
  return out;
}

std::string to_string(Term t) {
  switch (t) {
    case Term::fe: return "fe";
    case Term::cv: return "cv";
    case Term::ca: return "ca";
    case Term::spw: return "spw";
    case Term::stpw: return "stpw";
  }
  return "?";
}

Term parse_term(std::string_view s) {
  for (Term t : kAllTerms) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown distillation point '" + std::string(s) +
                    "' (expected fe, cv, ca, spw or stpw)");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::smooth_l1: return "smoothl1";
    case LossKind::log_l1: return "logl1";
    case LossKind::cosine: return "cosine";
    case LossKind::kld: return "kld";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (l == "smoothl1" || l == "smooth_l1") return LossKind::smooth_l1;
  if (l == "logl1" || l == "log_l1") return LossKind::log_l1;
  if (l == "cosine") return LossKind::cosine;
  if (l == "kld" || l == "kl") return LossKind::kld;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected smoothl1, logl1, cosine or kld)");
}

double ObjectiveWeights::weight(Term t) const {
  switch (t) {
    case Term::fe: return lambda_fe;
    case Term::cv: return lambda_cv;
    case Term::ca: return lambda_ca;
    case Term::spw: return lambda_spw;
    case Term::stpw: return lambda_stpw;
  }
  return 0.0;
}

void ObjectiveWeights::validate(int num_ed_networks) const {
  for (Term t : kAllTerms) {
    const double w = weight(t);
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("objective weight lambda_" + to_string(t) + " must be finite and >= 0");
    }
  }
  if (static_cast<int>(intermediate_output_weights.size()) != num_ed_networks) {
    throw ConfigError("intermediate_output_weights has " +
                      std::to_string(intermediate_output_weights.size()) + " entries, expected " +
                      std::to_string(num_ed_networks));
  }
  for (double w : intermediate_output_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("intermediate_output_weights must be finite and >= 0");
    }
  }
}

std::vector<double> default_intermediate_weights(int num_ed_networks) {
  switch (num_ed_networks) {
    case 1: return {1.0};
    case 2: return {0.7, 1.0};
    case 3: return {0.5, 0.7, 1.0};
    default: throw ConfigError("num_ed_networks must be 1, 2 or 3");
  }
}

ObjectiveWeights default_objective_weights(int num_ed_networks) {
  ObjectiveWeights w;
  w.intermediate_output_weights = default_intermediate_weights(num_ed_networks);
  return w;
}

bool DistillPlan::enabled(Term t) const {
  return std::find(points.begin(), points.end(), t) != points.end();
}

bool DistillPlan::needs_teacher() const {
  return std::any_of(points.begin(), points.end(), [](Term t) { return t != Term::spw; });
}

void DistillPlan::validate() const {
  if (points.empty()) throw ConfigError("at least one objective term must be enabled");
  std::set<Term> seen;
  for (Term t : points) {
    if (!seen.insert(t).second) throw ConfigError("duplicate point '" + to_string(t) + "'");
    if (!losses.count(t)) throw ConfigError("no loss assigned to point '" + to_string(t) + "'");
  }
  for (auto [t, k] : losses) {
    if (k == LossKind::kld && (t == Term::spw || t == Term::stpw || t == Term::fe)) {
      throw ConfigError("kld needs volume taps; it cannot be assigned to '" + to_string(t) + "'");
    }
  }
}

namespace {

std::vector<std::string> split_csv(std::string_view csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : csv) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

std::vector<Term> DistillPlan::parse_points(std::string_view csv) {
  std::vector<Term> out;
  for (const auto& tok : split_csv(csv)) out.push_back(parse_term(tok));
  return out;
}

std::map<Term, LossKind> DistillPlan::parse_losses(std::string_view csv) {
  std::map<Term, LossKind> out;
  for (const auto& tok : split_csv(csv)) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("loss assignment '" + tok + "' must look like point=loss");
    }
    out[parse_term(tok.substr(0, eq))] = parse_loss_kind(tok.substr(eq + 1));
  }
  return out;
}

TeacherSpec TeacherSpec::parse(std::string_view s) {
  TeacherSpec t;
  if (s.empty() || s == "none") return t;
  if (s == "oracle") {
    t.kind = Kind::oracle;
    return t;
  }
  const auto colon = s.find(':');
  if (colon != std::string_view::npos) {
    const auto kind = s.substr(0, colon);
    t.path = std::string(s.substr(colon + 1));
    if (t.path.empty()) throw ConfigError("teacher path is empty in '" + std::string(s) + "'");
    if (kind == "checkpoint") {
      t.kind = Kind::checkpoint;
      return t;
    }
    if (kind == "taps") {
      t.kind = Kind::taps;
      return t;
    }
  }
  throw ConfigError("unknown teacher '" + std::string(s) +
                    "' (expected none, oracle, checkpoint:PATH or taps:PATH)");
}

std::string TeacherSpec::to_string() const {
  switch (kind) {
    case Kind::none: return "none";
    case Kind::oracle: return "oracle";
    case Kind::checkpoint: return "checkpoint:" + path;
    case Kind::taps: return "taps:" + path;
  }
  return "none";
}

double TrainConfig::lr_at(int epoch) const {
  int passed = 0;
  for (int m : lr_milestones) {
    if (epoch >= m) ++passed;
  }
  return initial_lr * std::pow(lr_decay_factor, passed);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be > 0");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be > 0");
  for (size_t i = 1; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] <= lr_milestones[i - 1]) {
      throw ConfigError("lr_milestones must be strictly increasing");
    }
  }
  if (crop_height <= 0 || crop_width <= 0 || crop_height % 4 != 0 || crop_width % 4 != 0) {
    throw ConfigError("crop dimensions must be positive multiples of 4, got " +
                      std::to_string(crop_height) + "x" + std::to_string(crop_width));
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  plan.validate();
  if (plan.needs_teacher() && teacher.kind == TeacherSpec::Kind::none) {
    throw ConfigError("teacher-matching points are enabled but no teacher was given");
  }
}

TrainConfig TrainConfig::finetune() {
  TrainConfig t;
  t.epochs = 500;
  t.lr_milestones = {250};
  t.lr_decay_factor = 0.2;
  return t;
}

void ExperimentConfig::validate() const {
  model.validate();
  objective.validate(model.num_ed_networks);
  train.validate();
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"backbone", to_string(c.backbone)},
              {"num_ed_networks", c.num_ed_networks},
              {"base_channels", c.base_channels},
              {"max_disparity", c.max_disparity},
              {"correlation_groups", c.correlation_groups},
              {"use_attention", c.use_attention},
              {"negate_logits", c.negate_logits},
              {"upsample_before_head", c.upsample_before_head},
              {"attention_softmax", c.attention_softmax},
              {"fe_taps_both_views", c.fe_taps_both_views}};
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j,
                 {"preset", "backbone", "num_ed_networks", "base_channels", "max_disparity",
                  "correlation_groups", "use_attention", "negate_logits", "upsample_before_head",
                  "attention_softmax", "fe_taps_both_views"},
                 "model");
  ModelConfig c;
  if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
  if (j.contains("backbone")) c.backbone = parse_backbone(j.at("backbone").get<std::string>());
  read(j, "num_ed_networks", c.num_ed_networks);
  read(j, "base_channels", c.base_channels);
  read(j, "max_disparity", c.max_disparity);
  read(j, "correlation_groups", c.correlation_groups);
  read(j, "use_attention", c.use_attention);
  read(j, "negate_logits", c.negate_logits);
  read(j, "upsample_before_head", c.upsample_before_head);
  read(j, "attention_softmax", c.attention_softmax);
  read(j, "fe_taps_both_views", c.fe_taps_both_views);
  c.validate();
  return c;
}

json to_json(const ObjectiveWeights& w) {
  return json{{"lambda_fe", w.lambda_fe},     {"lambda_cv", w.lambda_cv},
              {"lambda_ca", w.lambda_ca},     {"lambda_spw", w.lambda_spw},
              {"lambda_stpw", w.lambda_stpw}, {"intermediate_output_weights", w.intermediate_output_weights}};
}

ObjectiveWeights objective_from_json(const json& j, int num_ed_networks) {
  reject_unknown(j,
                 {"lambda_fe", "lambda_cv", "lambda_ca", "lambda_spw", "lambda_stpw",
                  "intermediate_output_weights"},
                 "objective");
  ObjectiveWeights w = default_objective_weights(num_ed_networks);
  read(j, "lambda_fe", w.lambda_fe);
  read(j, "lambda_cv", w.lambda_cv);
  read(j, "lambda_ca", w.lambda_ca);
  read(j, "lambda_spw", w.lambda_spw);
  read(j, "lambda_stpw", w.lambda_stpw);
  read(j, "intermediate_output_weights", w.intermediate_output_weights);
  w.validate(num_ed_networks);
  return w;
}

json to_json(const TrainConfig& t) {
  json losses = json::object();
  for (auto [term, kind] : t.plan.losses) losses[to_string(term)] = to_string(kind);
  json points = json::array();
  for (Term p : t.plan.points) points.push_back(to_string(p));
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"initial_lr", t.initial_lr},
              {"lr_milestones", t.lr_milestones},
              {"lr_decay_factor", t.lr_decay_factor},
              {"adam_beta1", t.adam_beta1},
              {"adam_beta2", t.adam_beta2},
              {"crop_height", t.crop_height},
              {"crop_width", t.crop_width},
              {"seed", t.seed},
              {"dataset", t.dataset},
              {"train_split", t.train_split},
              {"val_split", t.val_split},
              {"teacher", t.teacher.to_string()},
              {"points", points},
              {"losses", losses},
              {"norm_mode", t.norm_mode == NormMode::batch_stats ? "batch" : "running"},
              {"cache_teacher", t.cache_teacher},
              {"checkpoint_every_epoch", t.checkpoint_every_epoch}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j,
                 {"epochs", "batch_size", "initial_lr", "lr_milestones", "lr_decay_factor",
                  "adam_beta1", "adam_beta2", "crop_height", "crop_width", "seed", "dataset",
                  "train_split", "val_split", "teacher", "points", "losses", "norm_mode",
                  "cache_teacher", "checkpoint_every_epoch"},
                 "train");
  TrainConfig t;
  read(j, "epochs", t.epochs);
  read(j, "batch_size", t.batch_size);
  read(j, "initial_lr", t.initial_lr);
  read(j, "lr_milestones", t.lr_milestones);
  read(j, "lr_decay_factor", t.lr_decay_factor);
  read(j, "adam_beta1", t.adam_beta1);
  read(j, "adam_beta2", t.adam_beta2);
  read(j, "crop_height", t.crop_height);
  read(j, "crop_width", t.crop_width);
  read(j, "seed", t.seed);
  read(j, "dataset", t.dataset);
  read(j, "train_split", t.train_split);
  read(j, "val_split", t.val_split);
  read(j, "cache_teacher", t.cache_teacher);
  read(j, "checkpoint_every_epoch", t.checkpoint_every_epoch);
  if (j.contains("teacher")) t.teacher = TeacherSpec::parse(j.at("teacher").get<std::string>());
  if (j.contains("points")) {
    const auto& p = j.at("points");
    if (p.is_string()) {
      t.plan.points = DistillPlan::parse_points(p.get<std::string>());
    } else {
      t.plan.points.clear();
      for (const auto& e : p) t.plan.points.push_back(parse_term(e.get<std::string>()));
    }
  }
  if (j.contains("losses")) {
    const auto& l = j.at("losses");
    if (l.is_string()) {
      for (auto [term, kind] : DistillPlan::parse_losses(l.get<std::string>())) t.plan.losses[term] = kind;
    } else {
      if (!l.is_object()) throw ConfigError("losses must be an object or a string");
      for (auto it = l.begin(); it != l.end(); ++it) {
        t.plan.losses[parse_term(it.key())] = parse_loss_kind(it.value().get<std::string>());
      }
    }
  }
  if (j.contains("norm_mode")) {
    const auto m = j.at("norm_mode").get<std::string>();
    if (m == "batch") {
      t.norm_mode = NormMode::batch_stats;
    } else if (m == "running") {
      t.norm_mode = NormMode::running_stats;
    } else {
      throw ConfigError("norm_mode must be 'batch' or 'running'");
    }
  }
  return t;
}

json to_json(const ExperimentConfig& e) {
  return json{{"model", to_json(e.model)}, {"objective", to_json(e.objective)}, {"train", to_json(e.train)}};
}

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j, {"model", "objective", "train"}, "experiment config");
  ExperimentConfig e;
  if (j.contains("model")) e.model = model_config_from_json(j.at("model"));
  e.objective = j.contains("objective") ? objective_from_json(j.at("objective"), e.model.num_ed_networks)
                                        : default_objective_weights(e.model.num_ed_networks);
  if (j.contains("train")) e.train = train_config_from_json(j.at("train"));
  return e;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

}  // namespace stereodistill
