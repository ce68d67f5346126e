#include "stereodistill/losses.hpp"

#include <cmath>

namespace stereodistill {

namespace {

void check_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

const uint8_t* mask_ptr(const Mask& m, int64_t expected, const char* what) {
  if (m.empty()) return nullptr;
  if (static_cast<int64_t>(m.size()) != expected) {
    throw ShapeError(std::string(what) + ": mask has " + std::to_string(m.size()) + " entries, expected " +
                     std::to_string(expected));
  }
  return m.data();
}

// Scalar loss node whose backward scales a precomputed student gradient.
Var scalar_loss(double value, const Var& student, Tensor grad) {
  return Var::make(Tensor({1}, std::vector<float>{static_cast<float>(value)}), {student},
                   [g = std::move(grad)](Node& self) {
                     const float up = self.grad[0];
                     float* dst = self.inputs[0]->grad_buffer().data();
                     const float* src = g.data();
                     for (int64_t i = 0; i < g.numel(); ++i) dst[i] += up * src[i];
                   });
}

}  // namespace

AxisLayout cosine_layout(const Shape& s) {
  if (s.empty()) throw ShapeError("cosine: scalar input");
  if (s.size() >= 4) return axis_layout(s, 1);
  return {s[0], numel(s) / s[0], 1};
}

AxisLayout axis_layout(const Shape& s, int axis) {
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("axis out of range for " + to_string(s));
  AxisLayout l;
  for (int i = 0; i < axis; ++i) l.outer *= s[i];
  l.axis = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

Var smooth_l1(const Var& student, const Tensor& teacher, const Mask& mask, double tau) {
  check_same(student.shape(), teacher.shape(), "smooth_l1");
  const int64_t n = teacher.numel();
  Tensor g(student.shape());
  const double v = kernels::smooth_l1(student.value().data(), teacher.data(),
                                      mask_ptr(mask, n, "smooth_l1"), n, tau, g.data());
  return scalar_loss(v, student, std::move(g));
}

Var log_l1(const Var& student, const Tensor& teacher, const Mask& mask, double eps) {
  check_same(student.shape(), teacher.shape(), "log_l1");
  const int64_t n = teacher.numel();
  Tensor g(student.shape());
  const double v = kernels::log_l1(student.value().data(), teacher.data(),
                                   mask_ptr(mask, n, "log_l1"), n, eps, g.data());
  return scalar_loss(v, student, std::move(g));
}

Var cosine_loss(const Var& student, const Tensor& teacher, const Mask& mask, double eps) {
  check_same(student.shape(), teacher.shape(), "cosine_loss");
  const AxisLayout l = cosine_layout(teacher.shape());
  Tensor g(student.shape());
  const double v = kernels::cosine(student.value().data(), teacher.data(),
                                   mask_ptr(mask, l.outer * l.inner, "cosine_loss"), l.outer, l.axis,
                                   l.inner, eps, g.data());
  return scalar_loss(v, student, std::move(g));
}

Var kld_loss(const Var& p_student, const Tensor& p_teacher, int axis, const Mask& mask) {
  check_same(p_student.shape(), p_teacher.shape(), "kld_loss");
  const AxisLayout l = axis_layout(p_teacher.shape(), axis);
  Tensor g(p_student.shape());
  const double v = kernels::kld(p_student.value().data(), p_teacher.data(),
                                mask_ptr(mask, l.outer * l.inner, "kld_loss"), l.outer, l.axis, l.inner,
                                g.data());
  return scalar_loss(v, p_student, std::move(g));
}

Var apply_loss(LossKind kind, const Var& student, const Tensor& teacher, const Mask& mask,
               int distribution_axis) {
  switch (kind) {
    case LossKind::smooth_l1: return smooth_l1(student, teacher, mask);
    case LossKind::log_l1: return log_l1(student, teacher, mask);
    case LossKind::cosine: return cosine_loss(student, teacher, mask);
    case LossKind::kld: return kld_loss(student, teacher, distribution_axis, mask);
  }
  throw ConfigError("unknown loss kind");
}

double LossBreakdown::get(Term t) const {
  switch (t) {
    case Term::fe: return l_fe;
    case Term::cv: return l_cv;
    case Term::ca: return l_ca;
    case Term::spw: return l_spw;
    case Term::stpw: return l_stpw;
  }
  return 0;
}

void LossBreakdown::set(Term t, double v) {
  switch (t) {
    case Term::fe: l_fe = v; break;
    case Term::cv: l_cv = v; break;
    case Term::ca: l_ca = v; break;
    case Term::spw: l_spw = v; break;
    case Term::stpw: l_stpw = v; break;
  }
}

LossBreakdown combine(const std::map<Term, double>& losses, const ObjectiveWeights& w) {
  LossBreakdown b;
  for (const auto& [term, value] : losses) {
    if (!std::isfinite(value)) throw DomainError("combine: non-finite " + to_string(term) + " loss");
    b.set(term, value);
    b.total += w.weight(term) * value;
  }
  return b;
}

}  // namespace stereodistill
