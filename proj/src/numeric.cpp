#include "kinoplan/numeric.hpp"

#include <algorithm>

namespace kinoplan {

Vec solve_linear(const Mat& M, const Vec& b) {
  if (M.rows() != M.cols())
    throw std::invalid_argument("solve_linear: matrix must be square");
  if (M.rows() != b.size())
    throw std::invalid_argument("solve_linear: dimension mismatch");
  Eigen::FullPivLU<Mat> lu(M);
  if (!lu.isInvertible()) throw SingularMatrixError();
  return lu.solve(b);
}

Vec sym_to_vech(const Mat& S) {
  const int n = static_cast<int>(S.rows());
  Vec v(vech_size(n));
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) v[k++] = S(i, j);
  return v;
}

Mat vech_to_sym(const Vec& v, int n) {
  Mat S(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) {
      S(i, j) = v[k];
      S(j, i) = v[k];
      ++k;
    }
  return S;
}

SampledCurve::SampledCurve(double t0, double h, std::vector<Vec> samples)
    : t0_(t0), h_(h), samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("SampledCurve: no samples");
  if (!(h_ > 0.0)) throw std::invalid_argument("SampledCurve: step must be > 0");
}

Vec SampledCurve::eval(double t) const {
  Vec out;
  eval_into(t, out);
  return out;
}

void SampledCurve::eval_into(double t, Vec& out) const {
  if (samples_.size() == 1) {
    out = samples_.front();
    return;
  }
  const double s = (t - t0_) / h_;
  if (s <= 0.0) {
    out = samples_.front();
    return;
  }
  const double last = static_cast<double>(samples_.size() - 1);
  if (s >= last) {
    out = samples_.back();
    return;
  }
  const auto i = static_cast<std::size_t>(s);
  const double a = s - static_cast<double>(i);
  out = (1.0 - a) * samples_[i] + a * samples_[i + 1];
}

double integrate_samples_uniform(double h, const std::vector<double>& f) {
  const std::size_t n = f.size();
  if (n < 2) return 0.0;
  const std::size_t intervals = n - 1;
  if (intervals == 1) return 0.5 * h * (f[0] + f[1]);
  if (intervals == 2) return h / 3.0 * (f[0] + 4.0 * f[1] + f[2]);

  double total = 0.0;
  std::size_t simpson_end = intervals;  // index of last sample covered by Simpson
  const bool odd = (intervals % 2) != 0;
  if (odd) simpson_end = intervals - 3;

  for (std::size_t i = 0; i + 2 <= simpson_end; i += 2)
    total += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);

  if (odd) {
    const std::size_t i = simpson_end;
    total += 3.0 * h / 8.0 * (f[i] + 3.0 * f[i + 1] + 3.0 * f[i + 2] + f[i + 3]);
  }
  return total;
}

double integrate_samples(const std::vector<double>& t, const std::vector<double>& f) {
  if (t.size() != f.size())
    throw std::invalid_argument("integrate_samples: size mismatch");
  const std::size_t n = t.size();
  if (n < 2) return 0.0;

  double total = 0.0;
  std::size_t run_start = 0;
  double run_h = t[1] - t[0];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h = t[i + 1] - t[i];
    const double scale = std::max({std::abs(run_h), std::abs(h), 1e-12});
    if (std::abs(h - run_h) > 1e-9 * scale) {
      std::vector<double> chunk(f.begin() + static_cast<long>(run_start),
                                f.begin() + static_cast<long>(i) + 1);
      total += integrate_samples_uniform(run_h, chunk);
      run_start = i;
      run_h = h;
    }
  }
  std::vector<double> chunk(f.begin() + static_cast<long>(run_start), f.end());
  total += integrate_samples_uniform(run_h, chunk);
  return total;
}

}  // namespace kinoplan
