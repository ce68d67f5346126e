#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace stereodistill {

enum class BackboneVariant { bb14, bb18, bb21 };

std::string to_string(BackboneVariant v);
BackboneVariant parse_backbone(std::string_view s);

/// Architecture hyperparameters of one student/teacher network.
struct ModelConfig {
  static constexpr int64_t kFeatureChannels = 320;

  BackboneVariant backbone = BackboneVariant::bb21;
  int num_ed_networks = 2;
  int base_channels = 16;   // N
  int max_disparity = 192;  // D, full resolution pixels
  int correlation_groups = 40;
  bool use_attention = false;

  // Interpretation switches; defaults are the documented choices.
  bool negate_logits = true;         // softmax over -volume in the regression head
  bool upsample_before_head = false; // head convs run at quarter resolution by default
  bool attention_softmax = false;    // sigmoid gating unless set
  bool fe_taps_both_views = false;   // early-feature taps from the left view only

  /// Canonical variant name, e.g. "BB21-ED2-N16" or "BB21-ED2-N16+attention".
  std::string name() const;
  int quarter_disparity() const { return max_disparity / 4; }
  /// Throws ConfigError on violated invariants.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Resolves variant names and the "DSNet" / "DSNet+Attention" aliases.
ModelConfig preset(std::string_view name);
/// Every grid name BB{14,18,21}-ED{1,2,3}-N{8,16,24,32}.
std::vector<std::string> preset_names();

/// Objective terms: four teacher-matching points plus ground-truth supervision.
enum class Term { fe, cv, ca, spw, stpw };
inline constexpr std::array<Term, 5> kAllTerms{Term::fe, Term::cv, Term::ca, Term::spw, Term::stpw};
std::string to_string(Term t);
Term parse_term(std::string_view s);

enum class LossKind { smooth_l1, log_l1, cosine, kld };
std::string to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);

struct ObjectiveWeights {
  double lambda_fe = 0.1;
  double lambda_cv = 0.1;
  double lambda_ca = 0.1;
  double lambda_spw = 0.4;
  double lambda_stpw = 0.4;
  /// Deep-supervision weights, one per ED output; last is the final output.
  std::vector<double> intermediate_output_weights{0.7, 1.0};

  double weight(Term t) const;
  void validate(int num_ed_networks) const;
};

std::vector<double> default_intermediate_weights(int num_ed_networks);
ObjectiveWeights default_objective_weights(int num_ed_networks = 2);

/// Which objective terms are active and which loss each one uses.
struct DistillPlan {
  std::vector<Term> points{Term::spw};
  std::map<Term, LossKind> losses{{Term::fe, LossKind::cosine},
                                  {Term::cv, LossKind::cosine},
                                  {Term::ca, LossKind::kld},
                                  {Term::spw, LossKind::log_l1},
                                  {Term::stpw, LossKind::smooth_l1}};
  bool enabled(Term t) const;
  LossKind loss(Term t) const { return losses.at(t); }
  /// True when any term needs a teacher.
  bool needs_teacher() const;
  void validate() const;

  /// Parses "spw,cv,fe" and "spw=logl1,cv=cosine".
  static std::vector<Term> parse_points(std::string_view csv);
  static std::map<Term, LossKind> parse_losses(std::string_view csv);
};

/// Teacher source: none, "oracle", "checkpoint:PATH" or "taps:PATH".
struct TeacherSpec {
  enum class Kind { none, oracle, checkpoint, taps };
  Kind kind = Kind::none;
  std::string path;

  static TeacherSpec parse(std::string_view s);
  std::string to_string() const;
};

enum class NormMode { batch_stats, running_stats };

struct TrainConfig {
  int epochs = 64;
  int batch_size = 8;
  double initial_lr = 1e-4;
  std::vector<int> lr_milestones{20, 32, 40, 48, 56};
  double lr_decay_factor = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int crop_height = 256;
  int crop_width = 512;
  uint64_t seed = 0;
  std::string dataset;       // directory holding a manifest.json
  std::string train_split = "train";
  std::string val_split = "test";
  TeacherSpec teacher;
  DistillPlan plan;
  NormMode norm_mode = NormMode::batch_stats;
  bool cache_teacher = true;
  bool checkpoint_every_epoch = true;

  /// Learning rate in effect during 0-based `epoch`.
  double lr_at(int epoch) const;
  void validate() const;

  /// Fine-tuning schedule: 500 epochs, lr x 1/5 after 250.
  static TrainConfig finetune();
};

struct ExperimentConfig {
  ModelConfig model = preset("DSNet");
  ObjectiveWeights objective = default_objective_weights(2);
  TrainConfig train;

  void validate() const;
};

// JSON mapping. Parsing is strict: unknown keys raise ConfigError.
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const ObjectiveWeights& w);
nlohmann::json to_json(const TrainConfig& t);
nlohmann::json to_json(const ExperimentConfig& e);
ModelConfig model_config_from_json(const nlohmann::json& j);
ObjectiveWeights objective_from_json(const nlohmann::json& j, int num_ed_networks);
TrainConfig train_config_from_json(const nlohmann::json& j);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::string& path);

}  // namespace stereodistill
