#include <algorithm>
#include <cmath>
#include <numeric>

#include "typecase/analytics.hpp"

namespace typecase {
namespace {

using Matrix = std::vector<std::vector<double>>;

std::vector<double> multiply(const Matrix& a, const std::vector<double>& v) {
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::inner_product(a[i].begin(), a[i].end(), v.begin(), 0.0);
  return out;
}

double norm(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

double rayleigh(const Matrix& a, const std::vector<double>& v) {
  const auto av = multiply(a, v);
  return std::inner_product(v.begin(), v.end(), av.begin(), 0.0);
}

Matrix square(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += a[i][k] * a[k][j];
      out[i][j] = out[j][i] = s;
    }
  }
  return out;
}

}  // namespace

Embedding block_embedding(const CoAppearanceMatrix& m, const EmbeddingOptions& options) {
  const std::size_t n = m.size();
  const std::size_t dims = options.dims;
  if (dims == 0 || n < dims + 1) {
    throw Error(ErrorCode::TooFewBlocks,
                "embedding into " + std::to_string(dims) + " dimensions needs at least " + std::to_string(dims + 1) +
                    " blocks, got " + std::to_string(n));
  }

  Matrix x(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) x[i][j] = static_cast<double>(m.at(i, j));
    const double len = norm(x[i]);
    if (len > 0) {
      for (double& v : x[i]) v /= len;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i][j];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) x[i][j] -= mean;
  }

  // Covariance of the centered rows.
  Matrix cov(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += x[i][a] * x[i][b];
      cov[a][b] = cov[b][a] = s / static_cast<double>(n);
    }
  }
  double scale = 0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(cov[i][i]));

  Embedding out;
  out.block_ids = m.block_ids;
  out.coords.assign(n, std::vector<double>(dims, 0.0));

  for (std::size_t axis = 0; axis < dims; ++axis) {
    out.iterations.push_back(0);
    double peak = 0;
    for (const auto& row : cov) {
      for (double c : row) peak = std::max(peak, std::abs(c));
    }
    if (peak <= 1e-14 * std::max(scale, 1.0)) {
      out.eigenvalues.push_back(0.0);  // remaining spectrum is (numerically) zero
      continue;
    }

    // Iterating on cov^8 shares its eigenvectors but widens the gap between
    // neighbouring eigenvalues, so near-ties still settle within the budget.
    Matrix power = cov;
    for (int squaring = 0; squaring < 3; ++squaring) {
      power = square(power);
      double top = 0;
      for (const auto& row : power) {
        for (double c : row) top = std::max(top, std::abs(c));
      }
      for (auto& row : power) {
        for (double& c : row) c /= top;
      }
    }

    std::vector<double> v(n, 0.0);
    v[0] = 1.0;
    double lambda = rayleigh(cov, v);
    bool converged = false;
    int it = 0;
    while (it < options.max_iterations) {
      ++it;
      std::vector<double> w = multiply(power, v);
      const double len = norm(w);
      if (len == 0.0) {
        // e1 is orthogonal to everything left; restart from the flat vector
        w.assign(n, 1.0 / std::sqrt(static_cast<double>(n)));
      } else {
        for (double& c : w) c /= len;
      }
      double moved = 0;
      for (std::size_t i = 0; i < n; ++i) moved = std::max(moved, std::abs(w[i] - v[i]));
      v = std::move(w);
      const double next = rayleigh(cov, v);
      const double change = std::abs(next - lambda);
      lambda = next;
      if (change < options.tolerance && moved < options.tolerance) {
        converged = true;
        break;
      }
    }
    out.iterations.back() = it;
    if (!converged) {
      throw Error(ErrorCode::NoConvergence,
                  "power iteration for axis " + std::to_string(axis) + " did not converge after " +
                      std::to_string(it) + " iterations");
    }

    for (double loading : v) {
      if (std::abs(loading) > 1e-12) {
        if (loading < 0) {
          for (double& c : v) c = -c;
        }
        break;
      }
    }
    out.eigenvalues.push_back(lambda);
    for (std::size_t i = 0; i < n; ++i) out.coords[i][axis] = std::inner_product(x[i].begin(), x[i].end(), v.begin(), 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) cov[a][b] -= lambda * v[a] * v[b];
    }
  }
  return out;
}

}  // namespace typecase
