#include "rtsrts/motion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "rtsrts/error.hpp"

namespace rtsrts::motion {

PcaMotionModel fit_pca(std::span<const DisplacementField> fields, int k) {
  const auto n = static_cast<int>(fields.size());
  if (k < 1) throw ValidationError("PCA rank must be at least 1");
  if (n < k + 1) {
    throw ValidationError("PCA with k=" + std::to_string(k) + " needs at least " +
                          std::to_string(k + 1) + " fields, got " + std::to_string(n));
  }
  for (const auto& f : fields) {
    validate(f);
    require_same_grid(fields[0].grid, f.grid, "fit_pca");
  }
  const std::size_t dim = fields[0].vectors.size();

  std::vector<double> mean(dim, 0.0);
  for (const auto& f : fields)
    for (std::size_t i = 0; i < dim; ++i) mean[i] += f.vectors[i];
  for (auto& m : mean) m /= n;

  // Centered samples in double.
  std::vector<std::vector<double>> centered(static_cast<std::size_t>(n), std::vector<double>(dim));
  for (int s = 0; s < n; ++s)
    for (std::size_t i = 0; i < dim; ++i) centered[s][i] = fields[s].vectors[i] - mean[i];

  Eigen::MatrixXd gram(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < dim; ++i) acc += centered[a][i] * centered[b][i];
      gram(a, b) = gram(b, a) = acc;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw NumericError("Gram eigendecomposition failed");
  const Eigen::VectorXd evals = solver.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = solver.eigenvectors().rowwise().reverse();

  const double top = std::max(evals(0), 0.0);
  int numerical_rank = 0;
  for (int i = 0; i < n; ++i) {
    if (evals(i) > 1e-10 * top && evals(i) > 0.0) ++numerical_rank;
  }
  if (k > numerical_rank) {
    throw ValidationError("PCA rank k=" + std::to_string(k) + " exceeds the rank " +
                          std::to_string(numerical_rank) + " of the centered fields");
  }

  PcaMotionModel model;
  model.mean.grid = fields[0].grid;
  model.mean.vectors.assign(mean.begin(), mean.end());
  for (int c = 0; c < k; ++c) {
    const double lambda = evals(c);
    const double inv_norm = 1.0 / std::sqrt(lambda);
    std::vector<double> comp(dim, 0.0);
    for (int s = 0; s < n; ++s) {
      const double w = evecs(s, c) * inv_norm;
      for (std::size_t i = 0; i < dim; ++i) comp[i] += w * centered[s][i];
    }
    // Deterministic sign: largest-magnitude entry positive.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < dim; ++i) {
      if (std::abs(comp[i]) > std::abs(comp[arg])) arg = i;
    }
    if (comp[arg] < 0.0) {
      for (auto& v : comp) v = -v;
    }
    DisplacementField f{fields[0].grid, std::vector<float>(comp.begin(), comp.end())};
    model.components.push_back(std::move(f));
    model.eigenvalues.push_back(lambda);
  }
  for (int i = k; i < n; ++i) model.discarded_eigenvalues.push_back(std::max(evals(i), 0.0));

  model.coeff_bounds.assign(static_cast<std::size_t>(k), {std::numeric_limits<double>::infinity(),
                                                          -std::numeric_limits<double>::infinity()});
  for (const auto& f : fields) {
    const auto coeffs = project(model, f);
    for (int c = 0; c < k; ++c) {
      auto& b = model.coeff_bounds[static_cast<std::size_t>(c)];
      b[0] = std::min(b[0], coeffs[static_cast<std::size_t>(c)]);
      b[1] = std::max(b[1], coeffs[static_cast<std::size_t>(c)]);
    }
  }
  return model;
}

std::vector<double> project(const PcaMotionModel& model, const DisplacementField& field) {
  require_same_grid(model.mean.grid, field.grid, "project");
  std::vector<double> coeffs;
  coeffs.reserve(model.components.size());
  for (const auto& comp : model.components) {
    double acc = 0.0;
    for (std::size_t i = 0; i < field.vectors.size(); ++i) {
      acc += (double(field.vectors[i]) - model.mean.vectors[i]) * comp.vectors[i];
    }
    coeffs.push_back(acc);
  }
  return coeffs;
}

DisplacementField synthesize_dvf(const PcaMotionModel& model, std::span<const double> coeffs) {
  if (coeffs.size() != model.components.size()) {
    throw ValidationError("expected " + std::to_string(model.components.size()) +
                          " coefficients, got " + std::to_string(coeffs.size()));
  }
  DisplacementField out = model.mean;
  if (std::all_of(coeffs.begin(), coeffs.end(), [](double c) { return c == 0.0; })) return out;
  for (std::size_t i = 0; i < out.vectors.size(); ++i) {
    double v = model.mean.vectors[i];
    for (std::size_t c = 0; c < coeffs.size(); ++c) v += coeffs[c] * model.components[c].vectors[i];
    out.vectors[i] = static_cast<float>(v);
  }
  return out;
}

std::vector<double> sample_coeffs(const PcaMotionModel& model, std::uint64_t seed,
                                  double extrapolation) {
  std::mt19937_64 rng(seed);
  std::vector<double> out;
  for (const auto& b : model.coeff_bounds) {
    const double mid = 0.5 * (b[0] + b[1]);
    const double half = 0.5 * (b[1] - b[0]) * extrapolation;
    std::uniform_real_distribution<double> dist(mid - half, mid + half);
    out.push_back(half > 0.0 ? dist(rng) : mid);
  }
  return out;
}

Volume warp_volume(const Volume& vol, const DisplacementField& dvf) {
  validate(vol.grid);
  require_same_grid(vol.grid, dvf.grid, "warp_volume");
  const Grid3& g = vol.grid;
  Volume out{g, std::vector<float>(vol.voxels.size())};
  const double inv[3] = {1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < g.nz(); ++k) {
    for (std::int64_t j = 0; j < g.ny(); ++j) {
      for (std::int64_t i = 0; i < g.nx(); ++i) {
        const auto idx = static_cast<std::size_t>(g.index(i, j, k));
        const float* u = &dvf.vectors[3 * idx];
        out.voxels[idx] = static_cast<float>(
            sample_trilinear(vol, i + u[0] * inv[0], j + u[1] * inv[1], k + u[2] * inv[2]));
      }
    }
  }
  return out;
}

Mask warp_mask(const Mask& mask, const DisplacementField& dvf) {
  validate(mask.grid);
  require_same_grid(mask.grid, dvf.grid, "warp_mask");
  const Grid3& g = mask.grid;
  Mask out{g, std::vector<std::uint8_t>(mask.voxels.size())};
  const double inv[3] = {1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
  auto nearest = [](double c, std::int64_t n) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(c + 0.5)), 0, n - 1);
  };
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < g.nz(); ++k) {
    for (std::int64_t j = 0; j < g.ny(); ++j) {
      for (std::int64_t i = 0; i < g.nx(); ++i) {
        const auto idx = static_cast<std::size_t>(g.index(i, j, k));
        const float* u = &dvf.vectors[3 * idx];
        const auto si = nearest(i + u[0] * inv[0], g.nx());
        const auto sj = nearest(j + u[1] * inv[1], g.ny());
        const auto sk = nearest(k + u[2] * inv[2], g.nz());
        out.voxels[idx] = mask.voxels[static_cast<std::size_t>(g.index(si, sj, sk))] ? 1 : 0;
      }
    }
  }
  return out;
}

}  // namespace rtsrts::motion
