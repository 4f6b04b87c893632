#include "gsgtrack/distance_transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace gsg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared distance transform of sampled function f (lower envelope of
// parabolas). v and z are scratch buffers of size n and n+1.
void dt1d(const double* f, double* d, int n, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  int first = 0;
  while (first < n && f[first] == kInf) ++first;
  if (first == n) {
    for (int q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  v[0] = first;
  for (int q = first + 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

ScalarMap squared_euclidean_dt(const Mask& mask) {
  const int H = mask.height, W = mask.width;
  ScalarMap out(H, W, 1);
  if (count_true(mask) == 0) {
    std::fill(out.data.begin(), out.data.end(), kEmptyMaskDistance * kEmptyMaskDistance);
    return out;
  }
  const int n = std::max(H, W);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < W; ++x) {
    for (int y = 0; y < H; ++y) f[y] = mask(y, x) ? 0.0 : kInf;
    dt1d(f.data(), d.data(), H, v.data(), z.data());
    for (int y = 0; y < H; ++y) out(y, x) = d[y];
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) f[x] = out(y, x);
    dt1d(f.data(), d.data(), W, v.data(), z.data());
    for (int x = 0; x < W; ++x) out(y, x) = d[x];
  }
  return out;
}

ScalarMap euclidean_dt(const Mask& mask) {
  ScalarMap d = squared_euclidean_dt(mask);
  for (double& v : d.data) v = std::sqrt(v);
  return d;
}

}  // namespace gsg
