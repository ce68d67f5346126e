#include "stereodistill/aggregation.hpp"

#include "stereodistill/errors.hpp"

namespace stereodistill {

namespace {

std::vector<int64_t> spatial(const Shape& s) { return {s.begin() + 2, s.end()}; }

}  // namespace

EDNetwork::EDNetwork(int64_t n)
    : n_(n),
      down1_(3, n, 2 * n, 3, 2, 1, true),
      conv2_(3, 2 * n, 2 * n, 3, 1, 1, true),
      down3_(3, 2 * n, 4 * n, 3, 2, 1, true),
      conv4_(3, 4 * n, 4 * n, 3, 1, 1, true),
      up5_(3, 4 * n, 2 * n, 3, 2, 1, false, true),
      up6_(3, 2 * n, n, 3, 2, 1, false, true) {
  if (n < 1) throw ConfigError("ED network needs at least one base channel");
}

Var EDNetwork::forward(const Var& x, const nn::ForwardMode& mode, Var* bottleneck) {
  if (x.shape().size() != 5 || x.dim(1) != n_) {
    throw ShapeError("ED network with N=" + std::to_string(n_) + " got " + to_string(x.shape()));
  }
  Var r2 = conv2_(down1_(x, mode), mode);
  Var r4 = conv4_(down3_(r2, mode), mode);
  if (bottleneck) *bottleneck = r4;
  // The outermost skip comes from the ED input: it is the only N-channel
  // activation at the input resolution.
  Var r5 = ops::relu(ops::add(up5_(r4, spatial(r2.shape()), mode), r2));
  return ops::relu(ops::add(up6_(r5, spatial(x.shape()), mode), x));
}

void EDNetwork::collect(const std::string& prefix, nn::StateRefs& refs) {
  down1_.collect(prefix + ".row1", refs);
  conv2_.collect(prefix + ".row2", refs);
  down3_.collect(prefix + ".row3", refs);
  conv4_.collect(prefix + ".row4", refs);
  up5_.collect(prefix + ".row5", refs);
  up6_.collect(prefix + ".row6", refs);
}

Shape EDNetwork::profile(nn::Profiler& p, const std::string& name, const Shape& in) const {
  Shape r2 = conv2_.profile(p, name + ".row2", down1_.profile(p, name + ".row1", in));
  Shape r4 = conv4_.profile(p, name + ".row4", down3_.profile(p, name + ".row3", r2));
  const auto s2 = spatial(r2);
  const auto s0 = spatial(in);
  Shape r5 = up5_.profile(p, name + ".row5", r4, &s2);
  return up6_.profile(p, name + ".row6", r5, &s0);
}

EDNetwork build_ed_network(int64_t base_channels) { return EDNetwork(base_channels); }

CostAggregation::CostAggregation(int64_t groups, int64_t n, int num_ed_networks)
    : groups_(groups),
      pre1_(3, groups, n, 3, 1, 1, true),
      pre2_(3, n, n, 3, 1, 1, true) {
  if (num_ed_networks < 1 || num_ed_networks > 3) throw ConfigError("num_ed_networks must be 1..3");
  for (int i = 0; i < num_ed_networks; ++i) eds_.emplace_back(n);
}

std::vector<Var> CostAggregation::operator()(const Var& volume, const nn::ForwardMode& mode,
                                             std::vector<Var>* bottlenecks) {
  if (volume.shape().size() != 5 || volume.dim(1) != groups_) {
    throw ShapeError("aggregation expects " + std::to_string(groups_) + " groups, got volume " +
                     to_string(volume.shape()));
  }
  Var x = pre2_(pre1_(volume, mode), mode);
  std::vector<Var> outs;
  for (auto& ed : eds_) {
    Var b;
    x = ed.forward(x, mode, bottlenecks ? &b : nullptr);
    if (bottlenecks) bottlenecks->push_back(b);
    outs.push_back(x);
  }
  return outs;
}

void CostAggregation::collect(const std::string& prefix, nn::StateRefs& refs) {
  pre1_.collect(prefix + ".pre1", refs);
  pre2_.collect(prefix + ".pre2", refs);
  for (size_t i = 0; i < eds_.size(); ++i) eds_[i].collect(prefix + ".ed" + std::to_string(i + 1), refs);
}

std::vector<Shape> CostAggregation::profile(nn::Profiler& p, const Shape& volume) const {
  Shape x = pre2_.profile(p, "pre2", pre1_.profile(p, "pre1", volume));
  std::vector<Shape> outs;
  for (size_t i = 0; i < eds_.size(); ++i) {
    x = eds_[i].profile(p, "ed" + std::to_string(i + 1), x);
    outs.push_back(x);
  }
  return outs;
}

CostAggregation build_aggregation(const ModelConfig& cfg) {
  cfg.validate();
  return CostAggregation(cfg.correlation_groups, cfg.base_channels, cfg.num_ed_networks);
}

}  // namespace stereodistill
