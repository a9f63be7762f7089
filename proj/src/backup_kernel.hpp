#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cvar_mdp/interpolation.hpp"
#include "cvar_mdp/mdp.hpp"
#include "cvar_mdp/pwl.hpp"

namespace cvar_mdp::detail {

struct KernelScratch {
  SegmentMerge merge;
  std::vector<SegmentSource> sources;
  std::vector<std::size_t> source_row;  // index into model.successors(x, a) per source
  std::vector<double> z;
  std::vector<double> gains;
};

/// Evaluates the interpolated backup
///   Q(x, a, y) = C(x, a) + gamma * max_{xi in U(y, P)} sum_x' P(x') I_x'[V](y xi(x')) / y
/// for a fixed value table. Chord slopes of every interpolant are computed
/// once at construction.
class BackupKernel {
 public:
  BackupKernel(const MdpModel& model, const InterpolationGrid& grid, const ValueTable& values);

  /// Q(x, a, ys[i]) for ascending ys in [0, 1].
  void q_values(StateIndex x, ActionIndex a, std::span<const double> ys, std::span<double> out,
                KernelScratch& scratch) const;

  /// Q(x, a, y) and, when xi is non-null, the maximizing weights over
  /// model.successors(x, a) (zero on zero-probability successors).
  double q_value(StateIndex x, ActionIndex a, double y, std::vector<double>* xi,
                 KernelScratch& scratch) const;

  /// Largest increase between successive chord slopes over all rows.
  double concavity_violation() const { return concavity_violation_; }

 private:
  std::span<const double> slopes(StateIndex x) const {
    const std::size_t off = grid_.offset(x) - static_cast<std::size_t>(x);
    return {slopes_.data() + off, grid_.size(x) - 1};
  }
  std::span<const double> lengths(StateIndex x) const {
    const std::size_t off = grid_.offset(x) - static_cast<std::size_t>(x);
    return {lengths_.data() + off, grid_.size(x) - 1};
  }
  void build_merge(StateIndex x, ActionIndex a, KernelScratch& scratch) const;
  /// Index into successors(x, a) of a worst successor at y = 0.
  std::size_t worst_successor(StateIndex x, ActionIndex a) const;
  double full_budget_value(StateIndex x, ActionIndex a) const;

  const MdpModel& model_;
  const InterpolationGrid& grid_;
  const ValueTable& values_;
  std::vector<double> slopes_;
  std::vector<double> lengths_;
  double concavity_violation_ = 0.0;
};

/// Runs fn(begin, end) over [0, n) split into contiguous chunks.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace cvar_mdp::detail
