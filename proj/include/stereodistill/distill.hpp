#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stereodistill/container.hpp"
#include "stereodistill/data.hpp"
#include "stereodistill/losses.hpp"
#include "stereodistill/model.hpp"

namespace stereodistill {

// ------------------------------------------------------------ alignment

/// Learned 1x1 (or 1x1x1) projections from student to teacher channels,
/// created on first use. They train with the student and are never part of
/// inference.
class ProjectionBank {
 public:
  explicit ProjectionBank(uint64_t seed = 0) : seed_(seed) {}

  Var project(const std::string& key, const Var& student, int64_t teacher_channels);
  void collect(nn::StateRefs& refs);
  bool empty() const { return convs_.empty(); }
  size_t size() const { return convs_.size(); }

 private:
  uint64_t seed_;
  std::map<std::string, nn::Conv> convs_;  // node-based: addresses are stable
};

struct AlignedPair {
  Var student;
  Tensor teacher;
};

/// Makes a student tap comparable with a teacher tap of the same rank.
/// Differing spatial (and disparity) extents: the teacher is resized
/// linearly to the student's; rank-3 disparity maps are also rescaled by
/// the width ratio. Differing channels (rank >= 4): the student goes through
/// `bank`'s projection named `key`. `teacher_is_distribution` renormalizes
/// the resized teacher along axis 2.
AlignedPair align(const Var& student, const Tensor& teacher, ProjectionBank* bank, const std::string& key,
                  bool teacher_is_distribution = false);

// ------------------------------------------------------------ teachers

class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual std::set<DistillPoint> capabilities() const = 0;
  /// Taps for the batch; never records gradient history.
  virtual TapSet forward(const Batch& batch) = 0;
  virtual std::string describe() const = 0;
};

/// Ideal taps synthesized from dense ground truth. Volume points carry a
/// [B, 1, D/4, H/4, W/4] Gaussian distribution (temperature in quarter
/// resolution pixels) centred on GT/4; the disparity point is the GT itself.
class OracleTeacher : public Teacher {
 public:
  explicit OracleTeacher(int max_disparity, double temperature = 1.0)
      : max_disparity_(max_disparity), temperature_(temperature) {}

  std::set<DistillPoint> capabilities() const override;
  TapSet forward(const Batch& batch) override;
  std::string describe() const override { return "oracle"; }

  /// The quarter-resolution target volume for a [B, H, W] disparity.
  Tensor volume(const Tensor& disparity) const;

 private:
  int max_disparity_;
  double temperature_;
};

/// A frozen network. Normalization uses running statistics and every ED
/// output is emitted at the disparity point. Taps are cached per
/// (sample id, crop) when enabled.
class ModelTeacher : public Teacher {
 public:
  explicit ModelTeacher(std::unique_ptr<StereoNet> net, bool cache = true,
                        size_t cache_limit_bytes = size_t{2} << 30);
  static std::unique_ptr<ModelTeacher> from_checkpoint(const std::string& path, bool cache = true);

  std::set<DistillPoint> capabilities() const override;
  TapSet forward(const Batch& batch) override;
  std::string describe() const override { return "model:" + net_->config().name(); }

  StereoNet& network() { return *net_; }
  size_t cached_samples() const { return cache_.size(); }

 private:
  TapSet run(const Batch& batch);

  std::unique_ptr<StereoNet> net_;
  bool cache_enabled_;
  size_t cache_limit_, cache_bytes_ = 0;
  std::map<std::string, std::map<DistillPoint, std::vector<Tensor>>> cache_;
};

/// Replays per-sample taps from a container written by `export_taps`.
/// Entries are named "<sample id>/<point>/<index>" and hold full-frame taps
/// without a batch axis; batches are served by cropping to their window.
class TapFileTeacher : public Teacher {
 public:
  explicit TapFileTeacher(const std::string& path);

  std::set<DistillPoint> capabilities() const override { return points_; }
  TapSet forward(const Batch& batch) override;
  std::string describe() const override { return "taps:" + path_; }

 private:
  std::string path_;
  Container file_;
  std::set<DistillPoint> points_;
  std::map<DistillPoint, bool> distribution_;
  std::map<DistillPoint, int64_t> counts_;
};

/// Spatial down-sampling of a point's taps relative to the input image.
int64_t tap_stride(DistillPoint p);

/// Runs `teacher` on every sample of `split` (full frames, padded to a
/// multiple of 4) and writes their taps.
void export_taps(Teacher& teacher, const std::string& dataset_dir, const std::string& split,
                 const std::string& out_path, int max_disparity, const std::set<DistillPoint>& points);

std::unique_ptr<Teacher> make_teacher(const TeacherSpec& spec, const ModelConfig& student, bool cache = true);

// ------------------------------------------------------------ optimization

/// Adam with bias correction. Parameters without a gradient in a step are
/// skipped, moments and step count included.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}

  void update(nn::StateRefs& refs, double lr);
  void save(Container& c) const;
  void load(const Container& c);

 private:
  struct Slot {
    Tensor m, v;
    int64_t step = 0;
  };
  double b1_, b2_, eps_;
  std::map<std::string, Slot> slots_;
};

struct DistillOptions {
  ObjectiveWeights weights = default_objective_weights(2);
  DistillPlan plan;
  NormMode norm_mode = NormMode::batch_stats;
  uint64_t seed = 0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999;
};

/// One student, at most one teacher, the objective and the optimizer.
class Distiller {
 public:
  /// Throws CapabilityError when an enabled point is not served by the teacher.
  Distiller(StereoNet& student, Teacher* teacher, DistillOptions opt);

  /// Forward, loss, backward and one Adam update. Returns the losses measured
  /// before the update.
  LossBreakdown step(const Batch& batch, double lr);
  /// Losses without updating parameters or normalization statistics.
  LossBreakdown evaluate(const Batch& batch);

  ProjectionBank& adapters() { return adapters_; }
  Adam& optimizer() { return adam_; }
  const DistillOptions& options() const { return opt_; }

 private:
  struct Terms {
    std::map<Term, Var> vars;
    LossBreakdown breakdown;
  };
  Terms compute(const Batch& batch, const nn::ForwardMode& mode);
  nn::StateRefs trainable();

  StereoNet& student_;
  Teacher* teacher_;
  DistillOptions opt_;
  ProjectionBank adapters_;
  Adam adam_;
};

// ------------------------------------------------------------ checkpoints

/// Model parameters and normalization buffers keyed by name.
Container model_state(StereoNet& net);
/// Requires every model name present with a matching shape and rejects
/// unknown model entries (ShapeError).
void load_model_state(StereoNet& net, const Container& c);
/// Independent copy with identical weights.
std::unique_ptr<StereoNet> clone(StereoNet& net);

void save_checkpoint(const std::string& path, StereoNet& net, int epoch, const Adam* adam = nullptr,
                     ProjectionBank* adapters = nullptr);
struct LoadedCheckpoint {
  ModelConfig model;
  int epoch = 0;
  Container container;
};
LoadedCheckpoint read_checkpoint(const std::string& path);
std::unique_ptr<StereoNet> load_model(const std::string& path);

// ------------------------------------------------------------ training

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double lr = 0;
  LossBreakdown losses;  // mean over the epoch's batches
  double val_epe = 0;    // NaN without a validation split
};

std::string metrics_history_header();
std::string metrics_history_row(const EpochMetrics& m);

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::string final_checkpoint;
  std::string metrics_csv;
};

using ProgressFn = std::function<void(const EpochMetrics&)>;

/// Full run: data from `exp.train.dataset`, teacher from `exp.train.teacher`.
/// Writes run.json, metrics.csv, per-epoch checkpoints (when enabled) and
/// final.sdck into `out_dir`. Bit-reproducible for a fixed seed.
TrainResult train(const ExperimentConfig& exp, const std::string& out_dir, const ProgressFn& progress = {});

/// Pixel-weighted EPE of `net` over a split (full frames).
double evaluate_split_epe(StereoNet& net, const std::vector<StereoSample>& samples);

}  // namespace stereodistill
