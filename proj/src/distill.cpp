#include "stereodistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "stereodistill/errors.hpp"
#include "stereodistill/evaluation.hpp"
#include "stereodistill/rng.hpp"

#ifndef STEREODISTILL_VERSION
#define STEREODISTILL_VERSION "dev"
#endif

namespace stereodistill {

namespace fs = std::filesystem;

namespace {

// Item i of a batched tensor, keeping a batch axis of 1.
Tensor batch_item(const Tensor& t, int64_t i) {
  Shape s = t.shape();
  const int64_t n = numel(s) / s[0];
  s[0] = 1;
  Tensor out(s);
  std::copy(t.data() + i * n, t.data() + (i + 1) * n, out.data());
  return out;
}

Tensor stack_items(const std::vector<Tensor>& items) {
  Shape s = items.at(0).shape();
  const int64_t n = items[0].numel();
  s[0] = 0;
  for (const auto& t : items) {
    if (t.numel() != n || t.shape().size() != s.size()) throw ShapeError("teacher taps differ in shape across items");
    s[0] += t.dim(0);
  }
  Tensor out(s);
  int64_t off = 0;
  for (const auto& t : items) {
    std::copy(t.data(), t.data() + t.numel(), out.data() + off);
    off += t.numel();
  }
  return out;
}

std::string crop_key(const Batch& b, int64_t i) {
  const auto& c = b.crops[static_cast<size_t>(i)];
  return b.ids[static_cast<size_t>(i)] + "@" + std::to_string(c[0]) + "," + std::to_string(c[1]) + ":" +
         std::to_string(b.left.dim(2)) + "x" + std::to_string(b.left.dim(3));
}

nn::ForwardMode train_mode(NormMode m) {
  return m == NormMode::batch_stats ? nn::ForwardMode::train() : nn::ForwardMode::train_frozen_norm();
}

void renormalize_axis2(Tensor& t) {
  const AxisLayout l = axis_layout(t.shape(), 2);
  for (int64_t o = 0; o < l.outer; ++o) {
    for (int64_t i = 0; i < l.inner; ++i) {
      double s = 0;
      for (int64_t d = 0; d < l.axis; ++d) s += t[(o * l.axis + d) * l.inner + i];
      if (s <= 0) continue;
      for (int64_t d = 0; d < l.axis; ++d) t[(o * l.axis + d) * l.inner + i] /= static_cast<float>(s);
    }
  }
}

}  // namespace

// ------------------------------------------------------------ alignment

Var ProjectionBank::project(const std::string& key, const Var& student, int64_t teacher_channels) {
  const int dims = static_cast<int>(student.shape().size()) - 2;
  auto it = convs_.find(key);
  if (it == convs_.end()) {
    it = convs_.emplace(key, nn::Conv(dims, student.dim(1), teacher_channels, 1, 1, 0)).first;
    nn::StateRefs refs;
    it->second.collect("adapter." + key, refs);
    nn::initialize(refs, seed_);
  }
  const nn::Conv& conv = it->second;
  if (conv.in_channels() != student.dim(1) || conv.out_channels() != teacher_channels || conv.dims() != dims) {
    throw ShapeError("projection '" + key + "' was created for different channel counts");
  }
  return conv(student);
}

void ProjectionBank::collect(nn::StateRefs& refs) {
  for (auto& [key, conv] : convs_) conv.collect("adapter." + key, refs);
}

AlignedPair align(const Var& student, const Tensor& teacher, ProjectionBank* bank, const std::string& key,
                  bool teacher_is_distribution) {
  const Shape& s = student.shape();
  const Shape& t = teacher.shape();
  if (s.size() != t.size()) throw ShapeError("align: rank mismatch " + to_string(s) + " vs " + to_string(t));
  if (s.size() < 3) throw ShapeError("align: expected a batched tap, got " + to_string(s));
  if (s[0] != t[0]) throw ShapeError("align: batch mismatch " + to_string(s) + " vs " + to_string(t));
  AlignedPair out{student, teacher};
  const bool has_channels = s.size() >= 4;
  const int first = has_channels ? 2 : 1;
  const std::vector<int64_t> target(s.begin() + first, s.end());
  if (!std::equal(target.begin(), target.end(), t.begin() + first)) {
    out.teacher = ops::resize_linear(teacher, first, target);
    if (!has_channels) {
      // Disparity values scale with image width.
      const float r = static_cast<float>(s.back()) / static_cast<float>(t.back());
      for (auto& v : out.teacher.values()) v *= r;
    } else if (teacher_is_distribution) {
      renormalize_axis2(out.teacher);
    }
  }
  if (has_channels && s[1] != t[1]) {
    if (!bank) throw CapabilityError("align: channel mismatch at '" + key + "' and no projection available");
    out.student = bank->project(key, student, t[1]);
  }
  return out;
}

// ------------------------------------------------------------ teachers

int64_t tap_stride(DistillPoint p) {
  switch (p) {
    case DistillPoint::fe_early: return 2;
    case DistillPoint::cost_volume:
    case DistillPoint::cost_aggregation: return 4;
    case DistillPoint::disparity: return 1;
  }
  return 1;
}

std::set<DistillPoint> OracleTeacher::capabilities() const {
  return {DistillPoint::cost_volume, DistillPoint::cost_aggregation, DistillPoint::disparity};
}

Tensor OracleTeacher::volume(const Tensor& disparity) const {
  if (disparity.rank() != 3) throw ShapeError("oracle teacher expects [B,H,W] disparity");
  if (!all_finite(disparity)) throw DomainError("oracle teacher requires dense ground truth");
  const int64_t b = disparity.dim(0), h = disparity.dim(1), w = disparity.dim(2);
  if (h % 4 != 0 || w % 4 != 0) throw ShapeError("oracle teacher needs sizes divisible by 4");
  const int64_t h4 = h / 4, w4 = w / 4, d4 = max_disparity_ / 4, plane = h4 * w4;
  Tensor q = ops::resize_linear(disparity, 1, {h4, w4});
  Tensor vol({b, 1, d4, h4, w4});
  const double inv = 1.0 / (2.0 * temperature_ * temperature_);
  std::vector<double> col(static_cast<size_t>(d4));
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t i = 0; i < plane; ++i) {
      const double centre = q[n * plane + i] / 4.0;
      double sum = 0;
      for (int64_t d = 0; d < d4; ++d) {
        const double z = static_cast<double>(d) - centre;
        col[static_cast<size_t>(d)] = std::exp(-z * z * inv);
        sum += col[static_cast<size_t>(d)];
      }
      if (!(sum > 0)) {
        // Far outside the range: all mass on the nearest end.
        std::fill(col.begin(), col.end(), 0.0);
        col[centre < 0 ? 0 : static_cast<size_t>(d4 - 1)] = 1.0;
        sum = 1.0;
      }
      for (int64_t d = 0; d < d4; ++d) {
        vol[(n * d4 + d) * plane + i] = static_cast<float>(col[static_cast<size_t>(d)] / sum);
      }
    }
  }
  return vol;
}

TapSet OracleTeacher::forward(const Batch& batch) {
  TapSet taps;
  Var v(volume(batch.disparity));
  taps.entries[DistillPoint::cost_volume] = {v};
  taps.entries[DistillPoint::cost_aggregation] = {v};
  taps.entries[DistillPoint::disparity] = {Var(batch.disparity)};
  taps.distribution[DistillPoint::cost_volume] = true;
  taps.distribution[DistillPoint::cost_aggregation] = true;
  return taps;
}

ModelTeacher::ModelTeacher(std::unique_ptr<StereoNet> net, bool cache, size_t cache_limit_bytes)
    : net_(std::move(net)), cache_enabled_(cache), cache_limit_(cache_limit_bytes) {
  if (!net_) throw ConfigError("model teacher needs a network");
}

std::unique_ptr<ModelTeacher> ModelTeacher::from_checkpoint(const std::string& path, bool cache) {
  return std::make_unique<ModelTeacher>(load_model(path), cache);
}

std::set<DistillPoint> ModelTeacher::capabilities() const {
  return {DistillPoint::fe_early, DistillPoint::cost_volume, DistillPoint::cost_aggregation, DistillPoint::disparity};
}

TapSet ModelTeacher::run(const Batch& batch) {
  NoGradGuard guard;
  StereoNet::Output out = net_->forward(Var(batch.left), Var(batch.right), nn::ForwardMode::train_frozen_norm());
  return std::move(out.taps);
}

TapSet ModelTeacher::forward(const Batch& batch) {
  const int64_t n = batch.size();
  bool all_cached = cache_enabled_;
  for (int64_t i = 0; all_cached && i < n; ++i) all_cached = cache_.count(crop_key(batch, i)) > 0;
  TapSet taps;
  if (!all_cached) {
    taps = run(batch);
    if (!cache_enabled_) return taps;
    for (int64_t i = 0; i < n; ++i) {
      const std::string key = crop_key(batch, i);
      if (cache_.count(key)) continue;
      std::map<DistillPoint, std::vector<Tensor>> item;
      size_t bytes = 0;
      for (const auto& [p, vars] : taps.entries) {
        for (const auto& v : vars) {
          item[p].push_back(batch_item(v.value(), i));
          bytes += static_cast<size_t>(item[p].back().numel()) * 4;
        }
      }
      if (cache_bytes_ + bytes > cache_limit_) break;
      cache_bytes_ += bytes;
      cache_.emplace(key, std::move(item));
    }
    return taps;
  }
  const auto& first = cache_.at(crop_key(batch, 0));
  for (const auto& [p, tensors] : first) {
    auto& dst = taps.entries[p];
    for (size_t k = 0; k < tensors.size(); ++k) {
      std::vector<Tensor> items;
      for (int64_t i = 0; i < n; ++i) items.push_back(cache_.at(crop_key(batch, i)).at(p).at(k));
      dst.push_back(Var(stack_items(items)));
    }
  }
  return taps;
}

TapFileTeacher::TapFileTeacher(const std::string& path) : path_(path), file_(read_container(path)) {
  const auto& meta = file_.metadata;
  if (meta.value("format", "") != "stereodistill-taps") throw IoError(path + ": not a teacher tap file");
  try {
    for (const auto& [name, info] : meta.at("points").items()) {
      const DistillPoint p = parse_distill_point(name);
      points_.insert(p);
      distribution_[p] = info.value("distribution", false);
      counts_[p] = info.at("count").get<int64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed tap metadata: " + e.what());
  }
}

TapSet TapFileTeacher::forward(const Batch& batch) {
  TapSet taps;
  const int64_t h = batch.left.dim(2), w = batch.left.dim(3);
  for (DistillPoint p : points_) {
    const int64_t f = tap_stride(p);
    for (int64_t k = 0; k < counts_.at(p); ++k) {
      std::vector<Tensor> items;
      for (int64_t i = 0; i < batch.size(); ++i) {
        const std::string& id = batch.ids[static_cast<size_t>(i)];
        const std::string name = id + "/" + to_string(p) + "/" + std::to_string(k);
        const Tensor* t = file_.find(name);
        if (!t) throw CapabilityError(path_ + ": no taps for sample '" + id + "'");
        const auto [cy, cx] = batch.crops[static_cast<size_t>(i)];
        if (cy % f || cx % f || h % f || w % f) {
          throw ShapeError("crop window is not aligned with the '" + to_string(p) + "' tap grid");
        }
        const int64_t y0 = cy / f, x0 = cx / f, th = h / f, tw = w / f;
        const Shape& s = t->shape();
        const size_t r = s.size();
        if (r < 2 || s[r - 2] < y0 + th || s[r - 1] < x0 + tw) {
          throw ShapeError(path_ + ": tap " + name + " " + to_string(s) + " does not cover the batch window");
        }
        Shape out_shape{1};
        out_shape.insert(out_shape.end(), s.begin(), s.end() - 2);
        out_shape.push_back(th);
        out_shape.push_back(tw);
        Tensor out(out_shape);
        const int64_t lead = numel(s) / (s[r - 2] * s[r - 1]);
        for (int64_t l = 0; l < lead; ++l) {
          for (int64_t y = 0; y < th; ++y) {
            const float* src = t->data() + (l * s[r - 2] + y0 + y) * s[r - 1] + x0;
            std::copy(src, src + tw, out.data() + (l * th + y) * tw);
          }
        }
        items.push_back(std::move(out));
      }
      taps.entries[p].push_back(Var(stack_items(items)));
    }
    taps.distribution[p] = distribution_.at(p);
  }
  return taps;
}

void export_taps(Teacher& teacher, const std::string& dataset_dir, const std::string& split,
                 const std::string& out_path, int max_disparity, const std::set<DistillPoint>& points) {
  const auto caps = teacher.capabilities();
  for (DistillPoint p : points) {
    if (!caps.count(p)) throw CapabilityError("teacher " + teacher.describe() + " cannot emit '" + to_string(p) + "'");
  }
  const DatasetManifest m = load_manifest(dataset_dir);
  Container c;
  c.metadata["format"] = "stereodistill-taps";
  c.metadata["teacher"] = teacher.describe();
  c.metadata["split"] = split;
  nlohmann::json samples = nlohmann::json::array();
  nlohmann::json info = nlohmann::json::object();
  for (const auto& e : m.samples) {
    if (e.split != split) continue;
    const StereoSample s = load_sample(m, e);
    const Batch b = make_batch({prepare_full(s, max_disparity, 4)});
    const TapSet taps = teacher.forward(b);
    for (DistillPoint p : points) {
      const auto& vars = taps.at(p);
      info[to_string(p)] = {{"count", vars.size()}, {"distribution", taps.is_distribution(p)}};
      for (size_t k = 0; k < vars.size(); ++k) {
        Shape shape(vars[k].shape().begin() + 1, vars[k].shape().end());
        c.add(e.id + "/" + to_string(p) + "/" + std::to_string(k), vars[k].value().reshaped(shape));
      }
    }
    samples.push_back(e.id);
  }
  if (samples.empty()) throw ConfigError("split '" + split + "' of " + dataset_dir + " is empty");
  c.metadata["points"] = info;
  c.metadata["samples"] = samples;
  write_container(out_path, c);
}

std::unique_ptr<Teacher> make_teacher(const TeacherSpec& spec, const ModelConfig& student, bool cache) {
  switch (spec.kind) {
    case TeacherSpec::Kind::none: return nullptr;
    case TeacherSpec::Kind::oracle: return std::make_unique<OracleTeacher>(student.max_disparity);
    case TeacherSpec::Kind::checkpoint: return ModelTeacher::from_checkpoint(spec.path, cache);
    case TeacherSpec::Kind::taps: return std::make_unique<TapFileTeacher>(spec.path);
  }
  return nullptr;
}

// ------------------------------------------------------------ optimization

void Adam::update(nn::StateRefs& refs, double lr) {
  for (auto& p : refs.params) {
    if (!p.var->has_grad()) continue;
    Slot& s = slots_[p.name];
    Tensor& w = p.var->mutable_value();
    if (s.m.shape() != w.shape()) {
      s.m = Tensor(w.shape());
      s.v = Tensor(w.shape());
      s.step = 0;
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(s.step));
    const Tensor& g = p.var->grad();
    for (int64_t i = 0; i < w.numel(); ++i) {
      const double gi = g[i];
      const double m = b1_ * s.m[i] + (1.0 - b1_) * gi;
      const double v = b2_ * s.v[i] + (1.0 - b2_) * gi * gi;
      s.m[i] = static_cast<float>(m);
      s.v[i] = static_cast<float>(v);
      w[i] = static_cast<float>(w[i] - lr * (m / c1) / (std::sqrt(v / c2) + eps_));
    }
  }
}

void Adam::save(Container& c) const {
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, s] : slots_) {
    c.add("optim." + name + ".m", s.m);
    c.add("optim." + name + ".v", s.v);
    steps[name] = s.step;
  }
  c.metadata["optimizer"] = {{"type", "adam"}, {"beta1", b1_}, {"beta2", b2_}, {"eps", eps_}, {"steps", steps}};
}

void Adam::load(const Container& c) {
  if (!c.metadata.contains("optimizer")) return;
  slots_.clear();
  for (const auto& [name, step] : c.metadata["optimizer"].at("steps").items()) {
    Slot s;
    s.m = c.at("optim." + name + ".m");
    s.v = c.at("optim." + name + ".v");
    s.step = step.get<int64_t>();
    slots_.emplace(name, std::move(s));
  }
}

Distiller::Distiller(StereoNet& student, Teacher* teacher, DistillOptions opt)
    : student_(student),
      teacher_(teacher),
      opt_(std::move(opt)),
      adapters_(stream_seed(opt_.seed, "adapters")),
      adam_(opt_.adam_beta1, opt_.adam_beta2) {
  opt_.plan.validate();
  opt_.weights.validate(student.config().num_ed_networks);
  const auto caps = teacher_ ? teacher_->capabilities() : std::set<DistillPoint>{};
  for (Term t : opt_.plan.points) {
    const auto p = point_of(t);
    if (!p) continue;
    if (!teacher_) throw CapabilityError("point '" + to_string(t) + "' needs a teacher");
    if (!caps.count(*p)) {
      throw CapabilityError("teacher " + teacher_->describe() + " cannot provide '" + to_string(*p) +
                            "' needed by point '" + to_string(t) + "'");
    }
  }
}

nn::StateRefs Distiller::trainable() {
  nn::StateRefs refs = student_.state();
  adapters_.collect(refs);
  return refs;
}

Distiller::Terms Distiller::compute(const Batch& batch, const nn::ForwardMode& mode) {
  StereoNet::Output out = student_.forward(Var(batch.left), Var(batch.right), mode);
  TapSet teacher;
  if (teacher_ && opt_.plan.needs_teacher()) teacher = teacher_->forward(batch);

  const auto& iw = opt_.weights.intermediate_output_weights;
  if (out.disparities.size() != iw.size()) {
    throw ShapeError("student emitted " + std::to_string(out.disparities.size()) + " outputs for " +
                     std::to_string(iw.size()) + " deep-supervision weights");
  }
  const bool negate = student_.config().negate_logits;
  Terms terms;
  std::map<Term, double> values;
  for (Term t : opt_.plan.points) {
    const LossKind kind = opt_.plan.loss(t);
    Var v;
    switch (t) {
      case Term::spw: {
        std::vector<Var> parts;
        for (const auto& d : out.disparities) parts.push_back(apply_loss(kind, d, batch.disparity, batch.valid));
        v = ops::weighted_sum(parts, iw);
        break;
      }
      case Term::stpw: {
        const auto& td = teacher.at(DistillPoint::disparity);
        const int64_t nt = static_cast<int64_t>(td.size()), ns = static_cast<int64_t>(out.disparities.size());
        std::vector<Var> parts;
        for (int64_t i = 0; i < ns; ++i) {
          int64_t ti = nt - ns + i;
          if (ti < 0) ti = nt - 1;
          AlignedPair a = align(out.disparities[static_cast<size_t>(i)], td[static_cast<size_t>(ti)].value(), nullptr, "");
          Mask finite;
          if (!all_finite(a.teacher)) {
            finite.resize(static_cast<size_t>(a.teacher.numel()));
            for (int64_t j = 0; j < a.teacher.numel(); ++j) finite[static_cast<size_t>(j)] = std::isfinite(a.teacher[j]);
          }
          parts.push_back(apply_loss(kind, a.student, a.teacher, finite));
        }
        v = ops::weighted_sum(parts, iw);
        break;
      }
      case Term::fe: {
        const auto& s = out.taps.at(DistillPoint::fe_early);
        const auto& tt = teacher.at(DistillPoint::fe_early);
        if (s.size() != tt.size()) throw ShapeError("teacher and student disagree on the number of early taps");
        std::vector<Var> parts;
        for (size_t k = 0; k < s.size(); ++k) {
          AlignedPair a = align(s[k], tt[k].value(), &adapters_, "fe" + std::to_string(k));
          parts.push_back(apply_loss(kind, a.student, a.teacher));
        }
        v = ops::weighted_sum(parts, std::vector<double>(parts.size(), 1.0 / static_cast<double>(parts.size())));
        break;
      }
      case Term::cv:
      case Term::ca: {
        const DistillPoint p = *point_of(t);
        const bool dist = teacher.is_distribution(p);
        AlignedPair a = align(out.taps.at(p)[0], teacher.at(p)[0].value(), &adapters_, to_string(t), dist);
        if (kind == LossKind::kld) {
          Var ps = ops::softmax(a.student, 2, negate);
          Tensor pt = dist ? a.teacher : ops::softmax(a.teacher, 2, negate);
          v = kld_loss(ps, pt, 2);
        } else {
          v = apply_loss(kind, a.student, a.teacher);
        }
        break;
      }
    }
    values[t] = v.value()[0];
    terms.vars[t] = v;
  }
  terms.breakdown = combine(values, opt_.weights);
  return terms;
}

LossBreakdown Distiller::step(const Batch& batch, double lr) {
  nn::StateRefs before = trainable();
  nn::zero_grad(before);
  Terms terms = compute(batch, train_mode(opt_.norm_mode));
  std::vector<Var> parts;
  std::vector<double> weights;
  for (const auto& [t, v] : terms.vars) {
    const double w = opt_.weights.weight(t);
    if (w > 0) {
      parts.push_back(v);
      weights.push_back(w);
    }
  }
  if (!parts.empty()) {
    Var total = ops::weighted_sum(parts, weights);
    backward(total);
  }
  nn::StateRefs refs = trainable();
  adam_.update(refs, lr);
  return terms.breakdown;
}

LossBreakdown Distiller::evaluate(const Batch& batch) {
  NoGradGuard guard;
  nn::ForwardMode mode = train_mode(opt_.norm_mode);
  mode.update_running = false;
  return compute(batch, mode).breakdown;
}

// ------------------------------------------------------------ checkpoints

Container model_state(StereoNet& net) {
  Container c;
  nn::StateRefs refs = net.state();
  for (const auto& p : refs.params) c.add(p.name, p.var->value());
  for (const auto& b : refs.buffers) c.add(b.name, *b.tensor);
  return c;
}

void load_model_state(StereoNet& net, const Container& c) {
  nn::StateRefs refs = net.state();
  std::set<std::string> used;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    const Tensor* t = c.find(name);
    if (!t) throw ShapeError("checkpoint has no entry for '" + name + "'");
    if (t->shape() != shape) {
      throw ShapeError("checkpoint entry '" + name + "' has shape " + to_string(t->shape()) + ", model expects " +
                       to_string(shape));
    }
    used.insert(name);
    return *t;
  };
  for (auto& p : refs.params) p.var->mutable_value() = fetch(p.name, p.var->shape());
  for (auto& b : refs.buffers) *b.tensor = fetch(b.name, b.tensor->shape());
  for (const auto& [name, t] : c.entries) {
    if (used.count(name) || name.rfind("optim.", 0) == 0 || name.rfind("adapter.", 0) == 0) continue;
    throw ShapeError("checkpoint entry '" + name + "' does not belong to " + net.config().name());
  }
}

std::unique_ptr<StereoNet> clone(StereoNet& net) {
  auto copy = std::make_unique<StereoNet>(net.config());
  load_model_state(*copy, model_state(net));
  return copy;
}

void save_checkpoint(const std::string& path, StereoNet& net, int epoch, const Adam* adam, ProjectionBank* adapters) {
  Container c = model_state(net);
  c.metadata["kind"] = "checkpoint";
  c.metadata["format_version"] = 1;
  c.metadata["model"] = to_json(net.config());
  c.metadata["epoch"] = epoch;
  if (adapters) {
    nn::StateRefs refs;
    adapters->collect(refs);
    for (const auto& p : refs.params) c.add(p.name, p.var->value());
  }
  if (adam) adam->save(c);
  write_container(path, c);
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
  LoadedCheckpoint lc;
  lc.container = read_container(path);
  const auto& meta = lc.container.metadata;
  if (meta.value("kind", "") != "checkpoint" || !meta.contains("model")) {
    throw IoError(path + ": not a model checkpoint");
  }
  lc.model = model_config_from_json(meta.at("model"));
  lc.epoch = meta.value("epoch", 0);
  return lc;
}

std::unique_ptr<StereoNet> load_model(const std::string& path) {
  LoadedCheckpoint lc = read_checkpoint(path);
  auto net = std::make_unique<StereoNet>(lc.model);
  load_model_state(*net, lc.container);
  return net;
}

// ------------------------------------------------------------ training

std::string metrics_history_header() { return "epoch,lr,l_fe,l_cv,l_ca,l_spw,l_stpw,total,val_epe"; }

std::string metrics_history_row(const EpochMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", m.epoch, m.lr, m.losses.l_fe,
                m.losses.l_cv, m.losses.l_ca, m.losses.l_spw, m.losses.l_stpw, m.losses.total, m.val_epe);
  return buf;
}

double evaluate_split_epe(StereoNet& net, const std::vector<StereoSample>& samples) {
  MetricAccumulator acc;
  for (const auto& s : samples) {
    const PreparedSample p = prepare_full(s, net.config().max_disparity, 4);
    const Batch b = make_batch({p});
    Tensor pred = net.predict(b.left, b.right);
    pred.reshape(p.disparity.shape());
    acc.add(pred, p.disparity, p.valid);
  }
  return acc.report().epe_px;
}

TrainResult train(const ExperimentConfig& exp, const std::string& out_dir, const ProgressFn& progress) {
  exp.validate();
  const TrainConfig& tc = exp.train;
  if (tc.dataset.empty()) throw ConfigError("no dataset given");
  std::vector<StereoSample> train_set = load_split(tc.dataset, tc.train_split);
  if (train_set.empty()) throw ConfigError("dataset split '" + tc.train_split + "' is empty");
  std::vector<StereoSample> val_set = tc.val_split.empty() ? std::vector<StereoSample>{} : load_split(tc.dataset, tc.val_split);

  StereoNet student(exp.model);
  student.initialize(stream_seed(tc.seed, "init"));
  std::unique_ptr<Teacher> teacher = make_teacher(tc.teacher, exp.model, tc.cache_teacher);
  DistillOptions opt;
  opt.weights = exp.objective;
  opt.plan = tc.plan;
  opt.norm_mode = tc.norm_mode;
  opt.seed = tc.seed;
  opt.adam_beta1 = tc.adam_beta1;
  opt.adam_beta2 = tc.adam_beta2;
  Distiller distiller(student, teacher.get(), opt);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory '" + out_dir + "'");
  {
    nlohmann::json run;
    run["tool"] = "stereodistill";
    run["version"] = STEREODISTILL_VERSION;
    run["seed"] = tc.seed;
    run["config"] = to_json(exp);
    run["teacher"] = teacher ? teacher->describe() : "none";
    run["train_samples"] = train_set.size();
    run["val_samples"] = val_set.size();
    std::ofstream f(fs::path(out_dir) / "run.json");
    f << run.dump(2) << '\n';
    if (!f) throw IoError("cannot write run manifest in '" + out_dir + "'");
  }

  TrainResult result;
  result.metrics_csv = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream csv(result.metrics_csv);
  if (!csv) throw IoError("cannot write '" + result.metrics_csv + "'");
  csv << metrics_history_header() << '\n';

  const uint64_t shuffle_seed = stream_seed(tc.seed, "shuffle");
  const uint64_t crop_seed = stream_seed(tc.seed, "crop");
  const size_t n = train_set.size();
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.lr_at(epoch);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::mt19937_64 rng(stream_seed(shuffle_seed, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    LossBreakdown sum;
    int batches = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(tc.batch_size)) {
      std::vector<PreparedSample> items;
      for (size_t k = start; k < std::min(n, start + static_cast<size_t>(tc.batch_size)); ++k) {
        const uint64_t s = stream_seed(crop_seed, static_cast<uint64_t>(epoch) * n + order[k]);
        items.push_back(preprocess(train_set[order[k]], tc.crop_height, tc.crop_width, true, s, exp.model.max_disparity));
      }
      const LossBreakdown b = distiller.step(make_batch(items), lr);
      for (Term t : kAllTerms) sum.set(t, sum.get(t) + b.get(t));
      sum.total += b.total;
      ++batches;
    }
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.lr = lr;
    for (Term t : kAllTerms) m.losses.set(t, sum.get(t) / batches);
    m.losses.total = sum.total / batches;
    m.val_epe = val_set.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate_split_epe(student, val_set);
    csv << metrics_history_row(m) << '\n' << std::flush;
    result.history.push_back(m);
    if (tc.checkpoint_every_epoch) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch_%03d.sdck", epoch + 1);
      save_checkpoint((fs::path(out_dir) / name).string(), student, epoch + 1, &distiller.optimizer(),
                      &distiller.adapters());
    }
    if (progress) progress(m);
  }
  result.final_checkpoint = (fs::path(out_dir) / "final.sdck").string();
  save_checkpoint(result.final_checkpoint, student, tc.epochs, &distiller.optimizer(), &distiller.adapters());
  if (!csv) throw IoError("failed writing '" + result.metrics_csv + "'");
  return result;
}

}  // namespace stereodistill
