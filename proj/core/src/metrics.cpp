#include "rtsrts/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "rtsrts/error.hpp"
#include "rtsrts/rtsv_io.hpp"
#include "rtsrts/training.hpp"

namespace rtsrts::metrics {

namespace {

void same(const Grid3& a, const Grid3& b, const char* what) { require_same_grid(a, b, what); }

// Valid-mode separable filtering along one axis of a z-major buffer.
std::vector<double> filter_axis(const std::vector<double>& in, std::array<std::int64_t, 3>& dims, int axis,
                                const std::vector<double>& w) {
  const auto k = static_cast<std::int64_t>(w.size());
  std::array<std::int64_t, 3> od = dims;
  od[axis] = dims[axis] - k + 1;
  std::vector<double> out(static_cast<std::size_t>(od[0] * od[1] * od[2]), 0.0);
  const std::int64_t stride[3] = {1, dims[0], dims[0] * dims[1]};
  for (std::int64_t z = 0; z < od[2]; ++z)
    for (std::int64_t y = 0; y < od[1]; ++y)
      for (std::int64_t x = 0; x < od[0]; ++x) {
        const std::int64_t base = (z * dims[1] + y) * dims[0] + x;
        double acc = 0.0;
        for (std::int64_t t = 0; t < k; ++t) acc += w[static_cast<std::size_t>(t)] * in[static_cast<std::size_t>(base + t * stride[axis])];
        out[static_cast<std::size_t>((z * od[1] + y) * od[0] + x)] = acc;
      }
  dims = od;
  return out;
}

std::vector<double> gaussian_filter(const std::vector<double>& in, std::array<std::int64_t, 3> dims,
                                    const std::vector<double>& w) {
  auto a = filter_axis(in, dims, 0, w);
  auto b = filter_axis(a, dims, 1, w);
  return filter_axis(b, dims, 2, w);
}

}  // namespace

double mae(const Volume& p, const Volume& t) {
  same(p.grid, t.grid, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.voxels.size(); ++i) acc += std::abs(double(p.voxels[i]) - double(t.voxels[i]));
  return acc / double(p.voxels.size());
}

double mse(const Volume& p, const Volume& t) {
  same(p.grid, t.grid, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.voxels.size(); ++i) {
    const double d = double(p.voxels[i]) - double(t.voxels[i]);
    acc += d * d;
  }
  return acc / double(p.voxels.size());
}

double rmse(const Volume& p, const Volume& t) { return std::sqrt(mse(p, t)); }

double psnr_from_mse(double m) {
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double psnr(const Volume& p, const Volume& t) { return psnr_from_mse(mse(p, t)); }

double ssim(const Volume& p, const Volume& t) {
  same(p.grid, t.grid, "ssim");
  constexpr int k = 11;
  constexpr double sigma = 1.5;
  for (auto d : p.grid.dims) {
    if (d < k) throw ValidationError("ssim: volume " + describe(p.grid) + " is smaller than the 11^3 window");
  }
  std::vector<double> w(k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double x = i - (k - 1) / 2.0;
    w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= sum;

  const std::size_t n = p.voxels.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = p.voxels[i];
    y[i] = t.voxels[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto dims = p.grid.dims;
  const auto mx = gaussian_filter(x, dims, w), my = gaussian_filter(y, dims, w);
  const auto sxx = gaussian_filter(xx, dims, w), syy = gaussian_filter(yy, dims, w), sxy = gaussian_filter(xy, dims, w);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return acc / double(mx.size());
}

double dice(const Mask& a, const Mask& b) {
  same(a.grid, b.grid, "dice");
  std::int64_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    na += a.voxels[i] != 0;
    nb += b.voxels[i] != 0;
    both += a.voxels[i] != 0 && b.voxels[i] != 0;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * double(both) / double(na + nb);
}

std::optional<std::array<double, 3>> centroid_mm(const Mask& m) {
  const Grid3& g = m.grid;
  double s[3] = {0, 0, 0};
  std::int64_t count = 0;
  for (std::int64_t k = 0; k < g.nz(); ++k)
    for (std::int64_t j = 0; j < g.ny(); ++j)
      for (std::int64_t i = 0; i < g.nx(); ++i) {
        if (!m.voxels[static_cast<std::size_t>(g.index(i, j, k))]) continue;
        s[0] += double(i);
        s[1] += double(j);
        s[2] += double(k);
        ++count;
      }
  if (count == 0) return std::nullopt;
  std::array<double, 3> c{};
  for (int a = 0; a < 3; ++a) c[a] = g.origin[a] + g.spacing[a] * s[a] / double(count);
  return c;
}

std::optional<double> comd(const Mask& a, const Mask& b) {
  same(a.grid, b.grid, "comd");
  const auto ca = centroid_mm(a), cb = centroid_mm(b);
  if (!ca || !cb) return std::nullopt;
  return std::hypot((*ca)[0] - (*cb)[0], (*ca)[1] - (*cb)[1], (*ca)[2] - (*cb)[2]);
}

Mask binarize_seg(const tensor::Tensor<float>& probs, const Grid3& grid) {
  if (probs.rank() != 4 || probs.dim(0) != 2 || probs.numel() != 2 * grid.count()) {
    throw ShapeError("binarize_seg: expected [2, " + describe(grid) + "], got " + tensor::to_string(probs.shape()));
  }
  Mask m = Mask::filled(grid, 0);
  const auto v = probs.values();
  const auto n = static_cast<std::size_t>(grid.count());
  for (std::size_t i = 0; i < n; ++i) m.voxels[i] = v[i] > v[n + i] ? 1 : 0;
  return m;
}

Volume to_volume(const tensor::Tensor<float>& recon, const Grid3& grid) {
  if (recon.numel() != grid.count()) {
    throw ShapeError("to_volume: " + tensor::to_string(recon.shape()) + " does not fit " + describe(grid));
  }
  return Volume{grid, std::vector<float>(recon.values().begin(), recon.values().end())};
}

const std::vector<std::string>& EvalReport::columns() {
  static const std::vector<std::string> cols{"mae", "mse", "rmse", "psnr_db", "ssim", "dice", "comd_mm"};
  return cols;
}

namespace {

std::optional<double> column_value(const SampleMetrics& r, const std::string& c) {
  if (c == "mae") return r.mae;
  if (c == "mse") return r.mse;
  if (c == "rmse") return r.rmse;
  if (c == "psnr_db") return r.psnr_db;
  if (c == "ssim") return r.ssim;
  if (c == "dice") return r.dice;
  if (c == "comd_mm") return r.comd_mm;
  throw ValidationError("unknown metric column '" + c + "'");
}

}  // namespace

Aggregate EvalReport::aggregate(const std::string& column) const {
  std::vector<double> vals;
  for (const auto& r : rows) {
    const auto v = column_value(r, column);
    if (v && std::isfinite(*v)) vals.push_back(*v);
  }
  Aggregate a;
  a.count = static_cast<int>(vals.size());
  if (vals.empty()) return a;
  double s = 0.0;
  for (double v : vals) s += v;
  a.mean = s / double(vals.size());
  if (vals.size() > 1) {
    double ss = 0.0;
    for (double v : vals) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / double(vals.size() - 1));
  }
  return a;
}

std::string format_metric(std::optional<double> v) {
  if (!v) return "";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return io::format_double(*v);
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "sample_id,tag,mae,mse,rmse,psnr_db,ssim,dice,comd_mm\n";
  for (const auto& r : rows) {
    os << r.sample_id << ',' << r.tag;
    for (const auto& c : columns()) os << ',' << format_metric(column_value(r, c));
    os << '\n';
  }
  os << '\n';
  for (const char* stat : {"mean", "std"}) {
    os << "aggregate_" << stat << ',' << tag;
    for (const auto& c : columns()) {
      const auto a = aggregate(c);
      if (a.count == 0) {
        os << ',';
      } else {
        os << ',' << format_metric(std::string(stat) == "mean" ? a.mean : a.std);
      }
    }
    os << '\n';
  }
  return os.str();
}

SampleMetrics score(const std::string& id, const std::string& tag, const Volume& recon, const Volume& target,
                    const std::optional<Mask>& seg, const Mask& target_mask) {
  SampleMetrics r;
  r.sample_id = id;
  r.tag = tag;
  r.mae = mae(recon, target);
  r.mse = mse(recon, target);
  r.rmse = std::sqrt(r.mse);
  r.psnr_db = psnr_from_mse(r.mse);
  r.ssim = ssim(recon, target);
  if (seg) {
    r.dice = dice(*seg, target_mask);
    r.comd_mm = comd(*seg, target_mask);
  }
  return r;
}

EvalReport evaluate_suite(const network::ModelState<float>& model, const std::vector<dataset::Sample>& samples,
                          const std::string& tag, double noise_sigma, std::uint64_t noise_seed) {
  if (samples.empty()) throw ValidationError("evaluate_suite: no samples");
  EvalReport rep;
  rep.tag = tag;
  tensor::NoGradGuard guard;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    dataset::Sample input = s;
    if (noise_sigma > 0.0) input.projection = add_gaussian_noise(s.projection, noise_sigma, noise_seed + i);
    const auto t = training::to_tensors(input);
    const auto fwd = network::forward(model, t.projection);
    std::optional<Mask> seg;
    if (fwd.seg.defined()) seg = binarize_seg(fwd.seg, s.volume.grid);
    rep.rows.push_back(score(s.id, tag, to_volume(fwd.recon, s.volume.grid), s.volume, seg, s.mask));
  }
  return rep;
}

}  // namespace rtsrts::metrics
