// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance                 every criterion (7 takes hours on a CPU)
//   acceptance --only 3 --only 8
//   acceptance --quick         everything except the long toy distillation
//   acceptance --work DIR      scratch directory (kept afterwards)

#include <png.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "stereodistill/cli.hpp"
#include "stereodistill/costvolume.hpp"
#include "stereodistill/distill.hpp"
#include "stereodistill/evaluation.hpp"
#include "stereodistill/regression.hpp"

using namespace stereodistill;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (failures_++ < 6) failed_ += (failed_.empty() ? "" : "; ") + what;
    }
  }
  Outcome done(const std::string& summary) const {
    return {pass_, pass_ ? summary : summary + " | failed: " + failed_ + (failures_ > 6 ? " ..." : "")};
  }

 private:
  bool pass_ = true;
  int failures_ = 0;
  std::string failed_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

// ------------------------------------------------------------ 1

Outcome complexity() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  const ComplexityReport r = profile_model(preset("BB21-ED2-N16"), 544, 960);
  const double pm = r.params_millions(), gm = r.macs_giga();
  c.expect(std::abs(pm - 1.50) <= 0.10 * 1.50, "params " + fmt("%.3f", pm) + " M outside 1.50 +-10%");
  c.expect(std::abs(gm - 67.20) <= 0.15 * 67.20, "MACs " + fmt("%.2f", gm) + " G outside 67.20 +-15%");
  int64_t p_sum = 0;
  uint64_t m_sum = 0;
  for (const auto& m : r.modules) {
    p_sum += m.params;
    m_sum += m.macs;
  }
  c.expect(p_sum == r.params && m_sum == r.macs, "module breakdown does not sum to the total");

  auto cost = [](const char* name) { return profile_model(preset(name), 544, 960); };
  const auto e1 = cost("BB21-ED1-N32"), e2 = cost("BB21-ED2-N32"), e3 = cost("BB21-ED3-N32");
  const auto n8 = cost("BB21-ED2-N8"), n16 = cost("BB21-ED2-N16"), n24 = cost("BB21-ED2-N24");
  // Table ordering: ED1 < ED2 < ED3 and N8 < N16 < N24 in both columns.
  c.expect(e1.macs < e2.macs && e2.macs < e3.macs, "ED MAC ordering");
  c.expect(e1.params < e2.params && e2.params < e3.params, "ED parameter ordering");
  c.expect(n8.macs < n16.macs && n16.macs < n24.macs, "N MAC ordering");
  c.expect(n8.params < n16.params && n16.params < n24.params, "N parameter ordering");
  const double t = seconds_since(t0);
  c.expect(t < 10, "runtime " + fmt("%.1f", t) + " s");
  return c.done("BB21-ED2-N16 @544x960: " + fmt("%.3f", pm) + " M params (target 1.50), " + fmt("%.2f", gm) +
                " G MACs (target 67.20); ED/N orderings checked; " + fmt("%.2f", t) + " s");
}

// ------------------------------------------------------------ 2

Outcome cost_volume_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  std::mt19937_64 rng(2024);
  double worst = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const int64_t groups = 1 + static_cast<int64_t>(rng() % 4);
    const int64_t per = 1 + static_cast<int64_t>(rng() % (16 / groups));
    const int64_t C = groups * per, d4 = 1 + static_cast<int64_t>(rng() % 8);
    const int64_t H = 1 + static_cast<int64_t>(rng() % 8), W = 1 + static_cast<int64_t>(rng() % 8);
    const int64_t B = 1 + static_cast<int64_t>(rng() % 2);
    const Tensor l = oracle::random_tensor({B, C, H, W}, rng), r = oracle::random_tensor({B, C, H, W}, rng);
    const Tensor got = groupwise_correlation(l, r, 4 * d4, groups);
    const Tensor want = oracle::groupwise_correlation(l, r, d4, groups);
    if (got.shape() != want.shape()) {
      c.expect(false, "shape " + to_string(got.shape()) + " vs " + to_string(want.shape()));
      continue;
    }
    worst = std::max(worst, max_abs_diff(got, want));
  }
  c.expect(worst <= 1e-5, "max deviation " + fmt("%.3g", worst));
  const double t = seconds_since(t0);
  c.expect(t < 30, "runtime " + fmt("%.1f", t) + " s");
  return c.done("50 random instances, max |diff| " + fmt("%.2e", worst) + ", " + fmt("%.2f", t) + " s");
}

// ------------------------------------------------------------ 3

Outcome soft_argmin_checks() {
  Checker c;
  for (int64_t D : {2, 7, 48, 192}) {
    for (int64_t idx : {int64_t{0}, D / 2, D - 1}) {
      Tensor p({1, D, 1, 1});
      p[idx] = 1.0f;
      const float v = soft_argmin(p)[0];
      c.expect(v == static_cast<float>(idx), "one-hot D=" + std::to_string(D) + " idx " + std::to_string(idx));
    }
  }
  Tensor u({1, 192, 2, 3}, 1.0f / 192);
  const Tensor um = soft_argmin(u);
  for (int64_t i = 0; i < um.numel(); ++i) c.expect(std::abs(um[i] - 95.5) <= 1e-4, "uniform D=192 gives " + fmt("%.6f", um[i]));
  // Through the softmax too: constant logits.
  const Tensor uc = soft_argmin(disparity_probabilities(Tensor({1, 192, 1, 1}, 0.3f), true));
  c.expect(std::abs(uc[0] - 95.5) <= 1e-4, "softmax of constant logits gives " + fmt("%.6f", uc[0]));

  std::mt19937_64 rng(3);
  const int64_t D = 64;
  const Tensor logits = oracle::random_tensor({10, D, 10, 10}, rng, -20, 20);  // 1000 columns
  const Tensor p = disparity_probabilities(logits, true);
  const Tensor m = soft_argmin(p);
  int out_of_range = 0;
  double oracle_dev = 0;
  for (int64_t b = 0; b < 10; ++b)
    for (int64_t i = 0; i < 100; ++i) {
      std::vector<double> col(D);
      for (int64_t d = 0; d < D; ++d) col[static_cast<size_t>(d)] = p[(b * D + d) * 100 + i];
      const float v = m[b * 100 + i];
      out_of_range += !(v >= 0 && v <= D - 1);
      oracle_dev = std::max(oracle_dev, std::abs(v - oracle::soft_argmin_column(col)));
    }
  c.expect(out_of_range == 0, std::to_string(out_of_range) + " columns outside [0, D-1]");
  c.expect(oracle_dev <= 1e-3, "deviation from the explicit sum " + fmt("%.3g", oracle_dev));
  return c.done("one-hot exact, uniform(192) = " + fmt("%.5f", um[0]) + ", 1000 random columns in range");
}

// ------------------------------------------------------------ 4

double loss_value(LossKind k, std::vector<float> s, std::vector<float> t, Shape shape) {
  Var sv(Tensor(shape, std::move(s)));
  Tensor tt(shape, std::move(t));
  if (k == LossKind::kld) return kld_loss(sv, tt, 1).value()[0];
  return apply_loss(k, sv, tt).value()[0];
}

Outcome loss_suite() {
  Checker c;
  auto near = [&](double got, double want, const std::string& what) {
    c.expect(std::abs(got - want) <= 1e-6, what + " = " + fmt("%.9g", got));
  };
  const double e = std::exp(1.0);
  near(loss_value(LossKind::smooth_l1, {1.5f, -2}, {1.5f, -2}, {2}), 0, "smooth_l1 diff 0");
  near(loss_value(LossKind::smooth_l1, {0.5f}, {0}, {1}), 0.125, "smooth_l1 diff 0.5");
  near(loss_value(LossKind::smooth_l1, {2}, {0}, {1}), 1.5, "smooth_l1 diff 2");
  near(loss_value(LossKind::log_l1, {3, 4}, {3, 4}, {2}), 0, "log_l1 diff 0");
  {
    // Double kernel: e - 1 is not representable in float.
    const double s = e - 1, t = 0;
    near(kernels::log_l1<double>(&s, &t, nullptr, 1, 1.0, nullptr), 1.0, "log_l1 diff e-1");
  }
  near(loss_value(LossKind::log_l1, {1}, {0}, {1}), std::log(2.0), "log_l1 diff 1");
  near(loss_value(LossKind::cosine, {1, 2, 3}, {1, 2, 3}, {1, 3, 1, 1}), 0, "cosine a == b");
  near(loss_value(LossKind::cosine, {1, 2, 3}, {-1, -2, -3}, {1, 3, 1, 1}), 2, "cosine b == -a");
  near(loss_value(LossKind::cosine, {1, 0}, {0, 1}, {1, 2, 1, 1}), 1, "cosine orthogonal");
  near(loss_value(LossKind::kld, {0.3f, 0.7f}, {0.3f, 0.7f}, {1, 2, 1}), 0, "kld p_S == p_T");
  near(loss_value(LossKind::kld, {0.5f, 0.5f}, {1, 0}, {1, 2, 1}), std::log(2.0), "kld [1,0] vs [0.5,0.5]");
  near(loss_value(LossKind::kld, std::vector<float>(8, 0.5f), std::vector<float>(8, 0.5f), {1, 2, 2, 2}), 0,
       "kld uniform over 2x2");

  const ObjectiveWeights w = default_objective_weights(2);
  near(combine({{Term::fe, 1}, {Term::cv, 1}, {Term::ca, 1}, {Term::spw, 1}, {Term::stpw, 1}}, w).total, 1.1,
       "combine all ones");
  near(combine({{Term::spw, 1}}, w).total, 0.4, "combine spw only");
  near(combine({{Term::fe, 0}, {Term::cv, 0}, {Term::ca, 0}, {Term::spw, 0}, {Term::stpw, 0}}, w).total, 0,
       "combine zeros");

  // Gradients against central differences, double precision.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  std::map<std::string, double> errs;
  {
    std::vector<double> s(24), t(24);
    for (size_t i = 0; i < s.size(); ++i) {
      t[i] = u(rng);
      s[i] = t[i] + u(rng);  // spans both smooth_l1 branches
    }
    std::vector<double> g(s.size());
    kernels::smooth_l1<double>(s.data(), t.data(), nullptr, 24, 1.0, g.data());
    errs["smooth_l1"] = oracle::relative_error(
        g, oracle::finite_difference([&](const std::vector<double>& x) {
          return kernels::smooth_l1<double>(x.data(), t.data(), nullptr, 24, 1.0, nullptr);
        }, s));
    kernels::log_l1<double>(s.data(), t.data(), nullptr, 24, 1.0, g.data());
    errs["log_l1"] = oracle::relative_error(
        g, oracle::finite_difference([&](const std::vector<double>& x) {
          return kernels::log_l1<double>(x.data(), t.data(), nullptr, 24, 1.0, nullptr);
        }, s));
    // 2 x 4 channels x 3 locations
    kernels::cosine<double>(s.data(), t.data(), nullptr, 2, 4, 3, 1e-8, g.data());
    errs["cosine"] = oracle::relative_error(
        g, oracle::finite_difference([&](const std::vector<double>& x) {
          return kernels::cosine<double>(x.data(), t.data(), nullptr, 2, 4, 3, 1e-8, nullptr);
        }, s));
  }
  {
    const Tensor ps = oracle::random_distribution(2, 5, 3, rng), pt = oracle::random_distribution(2, 5, 3, rng);
    std::vector<double> s(ps.values().begin(), ps.values().end()), t(pt.values().begin(), pt.values().end());
    std::vector<double> g(s.size());
    kernels::kld<double>(s.data(), t.data(), nullptr, 2, 5, 3, g.data());
    errs["kld"] = oracle::relative_error(
        g, oracle::finite_difference([&](const std::vector<double>& x) {
          return kernels::kld<double>(x.data(), t.data(), nullptr, 2, 5, 3, nullptr);
        }, s));
  }
  std::string gsum;
  for (const auto& [name, err] : errs) {
    c.expect(err <= 1e-4, name + " gradient rel. error " + fmt("%.3g", err));
    gsum += (gsum.empty() ? "" : ", ") + name + " " + fmt("%.1e", err);
  }
  return c.done("15 tagged examples within 1e-6; gradient rel. errors: " + gsum);
}

// ------------------------------------------------------------ 5

Batch toy_batch(int n, int h, int w, int max_disp, uint64_t seed) {
  std::vector<PreparedSample> items;
  for (int i = 0; i < n; ++i) {
    StereoSample s = synth_sample(seed + static_cast<uint64_t>(i), h, w, std::min(max_disp, w / 2 - 1), 2);
    s.id = "s" + std::to_string(i);
    items.push_back(preprocess(s, h, w, true, seed + static_cast<uint64_t>(i), max_disp));
  }
  return make_batch(items);
}

Outcome objective() {
  Checker c;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 10);
  const ObjectiveWeights w = default_objective_weights(2);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const double fe = u(rng), cv = u(rng), ca = u(rng), spw = u(rng), stpw = u(rng);
    const LossBreakdown b = combine({{Term::fe, fe}, {Term::cv, cv}, {Term::ca, ca}, {Term::spw, spw}, {Term::stpw, stpw}}, w);
    worst = std::max(worst, std::abs(b.total - (0.1 * (fe + cv + ca) + 0.4 * (spw + stpw))));
  }
  c.expect(worst <= 1e-6, "combine deviates by " + fmt("%.3g", worst));

  ModelConfig cfg = preset("BB21-ED2-N8");
  cfg.max_disparity = 32;
  StereoNet student(cfg);
  student.initialize(17);
  auto teacher = std::make_unique<ModelTeacher>(clone(student), false);
  DistillOptions opt;
  opt.weights = default_objective_weights(2);
  opt.weights.lambda_fe = 0.3;  // any lambda
  opt.weights.lambda_ca = 0.7;
  opt.plan.points = {Term::spw, Term::cv, Term::fe, Term::stpw, Term::ca};
  opt.norm_mode = NormMode::running_stats;
  Distiller d(student, teacher.get(), opt);
  const LossBreakdown b = d.step(toy_batch(2, 32, 64, 32, 90), 1e-4);
  c.expect(b.l_fe == 0, "l_fe = " + fmt("%.3g", b.l_fe));
  c.expect(b.l_cv == 0, "l_cv = " + fmt("%.3g", b.l_cv));
  c.expect(b.l_ca == 0, "l_ca = " + fmt("%.3g", b.l_ca));
  c.expect(b.l_stpw == 0, "l_stpw = " + fmt("%.3g", b.l_stpw));
  c.expect(b.l_spw > 0 && b.total == opt.weights.lambda_spw * b.l_spw, "total is not lambda_spw * l_spw");
  return c.done("combine max deviation " + fmt("%.1e", worst) + "; self-distillation S-T terms all 0, total = 0.4 * " +
                fmt("%.4f", b.l_spw));
}

// ------------------------------------------------------------ 6

Outcome shapes() {
  Checker c;
  NoGradGuard guard;
  const int64_t H = 64, W = 128;
  std::mt19937_64 rng(6);
  const Var left(oracle::random_tensor({1, 3, H, W}, rng)), right(oracle::random_tensor({1, 3, H, W}, rng));
  int checked = 0;
  for (const std::string& name : preset_names()) {
    for (bool attention : {false, true}) {
      ModelConfig cfg = preset(name);
      cfg.use_attention = attention;
      StereoNet net(cfg);
      net.initialize(1);
      const int64_t D = cfg.max_disparity, N = cfg.base_channels, G = cfg.correlation_groups;
      auto out = net.forward(left, right, nn::ForwardMode{true, false, true}, true);
      auto want = [&](const Var& v, Shape s, const std::string& what) {
        c.expect(v.defined() && v.shape() == s, cfg.name() + " " + what + " " + (v.defined() ? to_string(v.shape()) : "missing"));
      };
      want(out.features_left, {1, 320, H / 4, W / 4}, "backbone");
      want(out.features_right, {1, 320, H / 4, W / 4}, "backbone (right)");
      const auto& fe = out.taps.at(DistillPoint::fe_early);
      c.expect(fe.size() == 2, cfg.name() + " fe tap count");
      for (const auto& t : fe) want(t, {1, 32, H / 2, W / 2}, "layer 3/5 tap");
      want(out.taps.at(DistillPoint::cost_volume)[0], {1, G, D / 4, H / 4, W / 4}, "cost volume");
      if (attention) want(out.attention, {1, 1, D / 4, H / 4, W / 4}, "attention");
      c.expect(static_cast<int>(out.aggregated.size()) == cfg.num_ed_networks, cfg.name() + " ED count");
      for (const auto& a : out.aggregated) want(a, {1, N, D / 4, H / 4, W / 4}, "ED output");
      c.expect(static_cast<int>(out.bottlenecks.size()) == cfg.num_ed_networks, cfg.name() + " bottleneck count");
      for (const auto& b : out.bottlenecks) want(b, {1, 4 * N, D / 16, H / 16, W / 16}, "ED bottleneck");
      c.expect(static_cast<int>(out.disparities.size()) == cfg.num_ed_networks, cfg.name() + " output count");
      for (const auto& d : out.disparities) want(d, {1, H, W}, "disparity");
      const Tensor p = net.predict(left.value(), right.value());
      c.expect(p.shape() == Shape{1, H, W}, cfg.name() + " inference output " + to_string(p.shape()));
      ++checked;
    }
  }
  return c.done(std::to_string(checked) + " configurations (36 presets, with and without attention) at 3x64x128");
}

// ------------------------------------------------------------ 7

struct ToyResult {
  std::vector<double> vanilla, distilled;
  double teacher_epe = 0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome toy_distillation(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  const fs::path ds = work / "toy_dataset";
  GenerateOptions g;
  g.count = 250;
  g.test_count = 50;
  g.height = 64;
  g.width = 128;
  g.max_disparity = 32;
  g.seed = 7;
  generate_dataset(ds.string(), g);
  const std::vector<StereoSample> test = load_split(ds.string(), "test");

  auto experiment = [&](const char* name, uint64_t seed) {
    ExperimentConfig e;
    e.model = preset(name);
    e.model.max_disparity = 32;
    e.objective = default_objective_weights(e.model.num_ed_networks);
    e.train.epochs = 40;
    e.train.batch_size = 8;
    e.train.crop_height = 64;
    e.train.crop_width = 128;
    e.train.seed = seed;
    e.train.dataset = ds.string();
    e.train.val_split = "";  // scored once at the end
    e.train.checkpoint_every_epoch = false;
    return e;
  };
  auto log = [&](const std::string& s) {
    std::cerr << "[criterion 7 +" << static_cast<int>(seconds_since(t0)) << "s] " << s << std::endl;
  };

  ToyResult r;
  const ExperimentConfig te = experiment("BB21-ED3-N32", 100);
  const TrainResult tr = train(te, (work / "teacher").string());
  {
    auto net = load_model(tr.final_checkpoint);
    r.teacher_epe = evaluate_split_epe(*net, test);
  }
  log("teacher BB21-ED3-N32 test EPE " + fmt("%.4f", r.teacher_epe));
  for (uint64_t seed : {1, 2, 3}) {
    ExperimentConfig a = experiment("BB21-ED1-N8", seed);
    const TrainResult ra = train(a, (work / ("vanilla_seed" + std::to_string(seed))).string());
    r.vanilla.push_back(evaluate_split_epe(*load_model(ra.final_checkpoint), test));
    log("seed " + std::to_string(seed) + " vanilla EPE " + fmt("%.4f", r.vanilla.back()));

    ExperimentConfig b = a;
    b.train.teacher = TeacherSpec::parse("checkpoint:" + tr.final_checkpoint);
    b.train.plan.points = {Term::spw, Term::cv, Term::fe, Term::stpw, Term::ca};
    b.train.plan.losses = DistillPlan{}.losses;  // final-row assignment
    const TrainResult rb = train(b, (work / ("distilled_seed" + std::to_string(seed))).string());
    r.distilled.push_back(evaluate_split_epe(*load_model(rb.final_checkpoint), test));
    log("seed " + std::to_string(seed) + " distilled EPE " + fmt("%.4f", r.distilled.back()));
  }
  const double ma = median(r.vanilla), mb = median(r.distilled);
  {
    nlohmann::json j = {{"teacher_epe", r.teacher_epe}, {"vanilla_epe", r.vanilla}, {"distilled_epe", r.distilled},
                        {"median_vanilla", ma}, {"median_distilled", mb}, {"seconds", seconds_since(t0)}};
    std::ofstream(work / "toy_distillation.json") << j.dump(2) << "\n";
  }
  c.expect(mb <= ma, "median distilled EPE " + fmt("%.4f", mb) + " > vanilla " + fmt("%.4f", ma));
  const double hours = seconds_since(t0) / 3600;
  c.expect(hours <= 6, "runtime " + fmt("%.2f", hours) + " h");
  return c.done("teacher EPE " + fmt("%.4f", r.teacher_epe) + "; median test EPE vanilla " + fmt("%.4f", ma) +
                " vs distilled " + fmt("%.4f", mb) + " (3 seeds); " + fmt("%.2f", hours) + " h");
}

// ------------------------------------------------------------ 8

void write_raw_png16(const std::string& path, const std::vector<uint16_t>& raw, int h, int w) {
  FILE* f = std::fopen(path.c_str(), "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<size_t>(2 * w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const uint16_t v = raw[static_cast<size_t>(y * w + x)];
      row[static_cast<size_t>(2 * x)] = static_cast<unsigned char>(v >> 8);  // big-endian samples
      row[static_cast<size_t>(2 * x + 1)] = static_cast<unsigned char>(v & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

Outcome data_integrity(const fs::path& work) {
  Checker c;
  fs::create_directories(work);
  std::mt19937_64 rng(8);
  for (int channels : {1, 3}) {
    Tensor img = channels == 1 ? oracle::random_tensor({5, 7}, rng, -300, 300) : oracle::random_tensor({3, 4, 6}, rng);
    img[0] = std::numeric_limits<float>::infinity();
    img[1] = -0.0f;
    img[2] = 1e-40f;  // subnormal
    const std::string p = (work / ("roundtrip" + std::to_string(channels) + ".pfm")).string();
    write_pfm(p, img);
    const PfmImage back = read_pfm(p);
    c.expect(back.data.shape() == img.shape() &&
                 std::memcmp(back.data.data(), img.data(), static_cast<size_t>(img.numel()) * 4) == 0,
             "PFM round trip with " + std::to_string(channels) + " channel(s) is not bit-exact");
  }
  {
    const std::string p = (work / "hand.pfm").string();
    std::ofstream f(p, std::ios::binary);
    f << "Pf\n1 1\n-1.0\n";
    const float v = 3.5f;
    f.write(reinterpret_cast<const char*>(&v), 4);
    f.close();
    const Tensor d = read_pfm_disparity(p);
    c.expect(d.numel() == 1 && d[0] == 3.5f, "hand-built PFM");
  }
  int64_t checked = 0;
  double worst = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const StereoSample s = synth_sample(seed, 48, 96, 24, static_cast<int>(seed % 5));
    const int64_t H = s.height(), W = s.width();
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        if (!s.valid[static_cast<size_t>(y * W + x)]) continue;
        const int64_t d = static_cast<int64_t>(s.disparity[y * W + x]);
        if (x - d < 0) {
          c.expect(false, "valid pixel warps out of frame");
          continue;
        }
        for (int64_t ch = 0; ch < 3; ++ch) {
          worst = std::max(worst, static_cast<double>(std::abs(s.left.at({ch, y, x}) - s.right.at({ch, y, x - d}))));
        }
        ++checked;
      }
  }
  c.expect(worst == 0, "warp consistency error " + fmt("%.3g", worst));
  {
    const std::string p = (work / "kitti.png").string();
    write_raw_png16(p, {512, 0, 256, 1}, 2, 2);
    const KittiDisparity k = read_kitti_disparity(p);
    c.expect(k.disparity[0] == 2.0f && k.valid[0], "raw 512 -> 2.0");
    c.expect(!k.valid[1], "raw 0 -> invalid");
    c.expect(k.disparity[2] == 1.0f && k.valid[2], "raw 256 -> 1.0");
    c.expect(k.disparity[3] == 1.0f / 256 && k.valid[3], "raw 1 -> 1/256");
  }
  return c.done("PFM round trips bit-exact; warp error 0 over " + std::to_string(checked) +
                " valid pixels of 20 pairs; KITTI decodes exact");
}

// ------------------------------------------------------------ 9

Outcome metric_cases() {
  Checker c;
  auto t = [](std::vector<float> v) {
    const int64_t n = static_cast<int64_t>(v.size());
    return Tensor({n}, std::move(v));
  };
  auto near = [&](double got, double want, const std::string& what) {
    c.expect(std::abs(got - want) <= 1e-4, what + " = " + fmt("%.6f", got));
  };
  near(epe(t({1, 2, 3}), t({1, 2, 4})), 1.0 / 3, "epe [1,2,3] vs [1,2,4]");
  near(epe(t({1, 2, 3}), t({1, 2, 3})), 0, "epe identical");
  near(epe(t({1, 2, 3}), t({1, 2, 4}), Mask{1, 1, 0}), 0, "epe masked");
  near(d1(t({14.5f}), t({10})), 100, "d1 gt 10 pred 14.5");
  near(d1(t({104}), t({100})), 0, "d1 gt 100 pred 104");
  near(d1(t({5, 6}), t({5, 6})), 0, "d1 identical");
  const Tensor gt = t({10, 10, 10}), pr = t({10.5f, 11.5f, 13.5f});
  near(kpx(pr, gt, {}, 1), 200.0 / 3, "1px on errors 0.5, 1.5, 3.5");
  near(kpx(pr, gt, {}, 3), 100.0 / 3, "3px on the same errors");
  for (int k = 1; k <= 4; ++k) near(kpx(gt, gt, {}, k), 0, "kpx identical");

  std::mt19937_64 rng(9);
  int violations = 0;
  double oracle_dev = 0;
  for (int i = 0; i < 100; ++i) {
    const Tensor g = oracle::random_tensor({12, 16}, rng, 0, 64);
    Tensor p = g;
    std::normal_distribution<float> noise(0, 1 + static_cast<float>(i % 7));
    for (auto& v : p.values()) v += noise(rng);
    const MetricReport r = evaluate_metrics(p, g);
    for (int k = 1; k < 4; ++k) violations += r.kpx_percent.at(k) < r.kpx_percent.at(k + 1);
    violations += r.d1_percent > r.kpx_percent.at(3);
    const auto o = oracle::metrics(std::vector<double>(p.values().begin(), p.values().end()),
                                   std::vector<double>(g.values().begin(), g.values().end()));
    oracle_dev = std::max({oracle_dev, std::abs(o.epe - r.epe_px), std::abs(o.d1 - r.d1_percent),
                           std::abs(o.px[2] - r.kpx_percent.at(2))});
  }
  c.expect(violations == 0, std::to_string(violations) + " monotonicity violations");
  c.expect(oracle_dev <= 1e-4, "deviation from the loop oracle " + fmt("%.3g", oracle_dev));
  return c.done("tagged cases exact to 1e-4; k=1..4 monotone and D1 <= 3px on 100 random maps");
}

// ------------------------------------------------------------ 10

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& work) {
  Checker c;
  std::ostringstream sink;
  const fs::path ds = work / "det_dataset";
  const auto gen = run_cli({"gen-data", "--out", ds.string(), "--count", "10", "--test-count", "2", "--height", "32",
                            "--width", "64", "--max-disp", "16", "--seed", "4"},
                           sink, sink);
  c.expect(gen.exit_code == 0, "gen-data failed: " + sink.str());
  std::vector<std::string> metrics;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = work / ("det_run" + std::to_string(run));
    const auto r = run_cli({"distill", "--preset", "BB21-ED1-N8", "--max-disp", "16", "--groups", "8", "--epochs", "2",
                            "--batch-size", "3", "--crop-height", "32", "--crop-width", "48", "--seed", "21",
                            "--dataset", ds.string(), "--teacher", "oracle", "--points", "spw,cv,ca,stpw", "--out",
                            out.string(), "--checkpoint-every-epoch", "false"},
                           sink, sink);
    c.expect(r.exit_code == 0, "distill run failed: " + sink.str());
    metrics.push_back(slurp(out / "metrics.csv"));
  }
  c.expect(!metrics[0].empty() && metrics[0] == metrics[1], "metrics CSVs differ");
  c.expect(slurp(work / "det_run0" / "final.sdck") == slurp(work / "det_run1" / "final.sdck"), "final checkpoints differ");
  std::string epoch1;
  {
    std::istringstream in(metrics[0]);
    std::getline(in, epoch1);
    std::getline(in, epoch1);
  }
  return c.done("two seeded distill runs: identical metrics.csv and checkpoints; epoch 1 = " + epoch1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  bool quick = false;
  std::string work_arg;
  app.add_option("--only", only, "criterion numbers to run (repeatable)");
  app.add_flag("--quick", quick, "skip the multi-hour toy distillation (criterion 7)");
  app.add_option("--work", work_arg, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_arg.empty() ? fs::temp_directory_path() / "stereodistill_acceptance" : fs::path(work_arg);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"complexity reproduction", complexity},
      {"cost-volume oracle", cost_volume_oracle},
      {"soft-argmin", soft_argmin_checks},
      {"loss unit suite", loss_suite},
      {"objective", objective},
      {"shape conformance", shapes},
      {"toy distillation", [&] { return toy_distillation(work / "toy"); }},
      {"data integrity", [&] { return data_integrity(work / "data"); }},
      {"metric hand-cases", metric_cases},
      {"determinism", [&] { return determinism(work / "determinism"); }},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    if (only.empty() && quick && id == 7) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
