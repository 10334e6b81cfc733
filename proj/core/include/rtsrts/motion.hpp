#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "rtsrts/volume.hpp"

namespace rtsrts::motion {

// Linear motion model: mean field plus k orthonormal component fields.
// `eigenvalues` are those of the centered scatter matrix (sum over samples of
// squared deviations), so the rank-k reconstruction error of the training set
// equals the sum of the discarded eigenvalues.
struct PcaMotionModel {
  DisplacementField mean;
  std::vector<DisplacementField> components;
  std::vector<double> eigenvalues;             // descending, length k
  std::vector<double> discarded_eigenvalues;   // the remaining spectrum
  std::vector<std::array<double, 2>> coeff_bounds;  // [min,max] over training fields

  int rank() const { return static_cast<int>(components.size()); }
};

// Snapshot PCA: eigendecomposition of the n x n Gram matrix of centered
// fields. Requires n >= k + 1 fields on one grid; rejects k above the
// numerical rank of the centered data.
PcaMotionModel fit_pca(std::span<const DisplacementField> fields, int k);

// Coefficients of `field` in the model basis.
std::vector<double> project(const PcaMotionModel& model, const DisplacementField& field);

// mean + sum_i coeffs[i] * component_i
DisplacementField synthesize_dvf(const PcaMotionModel& model, std::span<const double> coeffs);

// Independent uniform draws per component from the observed bounds widened
// about their midpoint by `extrapolation`.
std::vector<double> sample_coeffs(const PcaMotionModel& model, std::uint64_t seed,
                                  double extrapolation = 1.2);

// Backward warp: out(x) = vol(x + dvf(x)) with trilinear interpolation and
// border replication outside the lattice.
Volume warp_volume(const Volume& vol, const DisplacementField& dvf);
// Same sampling positions, nearest-neighbour lookup; output stays binary.
Mask warp_mask(const Mask& mask, const DisplacementField& dvf);

}  // namespace rtsrts::motion
