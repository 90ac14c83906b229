#pragma once

// Shared helpers for the unit and acceptance tests: scratch directories,
// random instance generators and brute-force reference implementations.
// The reference implementations deliberately use the most literal O(N^2)
// formulation of each definition and share no code with the library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>
#include <vector>

#include "aqa/common.hpp"

namespace aqa::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("aqa-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -3.0, double hi = 3.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Values drawn from a small integer alphabet so ties are common.
inline std::vector<double> tied_vector(Rng& rng, std::size_t n, std::uint64_t levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng.index(levels));
  return v;
}

// ---------------------------------------------------------------------------
// Reference metrics

inline double ref_mse(const std::vector<double>& p, const std::vector<double>& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - l[i]) * (p[i] - l[i]);
  return s / static_cast<double>(p.size());
}

// Definition of the sample correlation with population moments.
inline double ref_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Rank of x_i = 1 + (#values below) + (#other values equal) / 2.
inline std::vector<double> ref_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t below = 0, equal = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) ++below;
      if (j != i && x[j] == x[i]) ++equal;
    }
    r[i] = 1.0 + static_cast<double>(below) + static_cast<double>(equal) / 2.0;
  }
  return r;
}

inline double ref_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return ref_pearson(ref_ranks(x), ref_ranks(y));
}

// Tau-b from an explicit enumeration of every unordered pair.
inline double ref_kendall_b(const std::vector<double>& x, const std::vector<double>& y) {
  std::int64_t c = 0, d = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++tx;
      } else if (dy == 0.0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++c;
      } else {
        ++d;
      }
    }
  }
  return static_cast<double>(c - d) / std::sqrt(static_cast<double>(c + d + tx) * static_cast<double>(c + d + ty));
}

// ---------------------------------------------------------------------------
// Reference losses (value only)

inline double ref_contrastive(const std::vector<double>& p, const std::vector<double>& l, double margin) {
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      s += std::max(0.0, std::abs((p[i] - p[j]) - (l[i] - l[j])) - margin);
      ++pairs;
    }
  }
  return s / static_cast<double>(pairs);
}

inline double ref_clipped_mse(const std::vector<double>& p, const std::vector<double>& l, double tau) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = p[i] - l[i];
    if (std::abs(e) > tau) s += e * e;
  }
  return s / static_cast<double>(p.size());
}

inline double ref_dcq(const std::vector<double>& p, const std::vector<double>& l, double wdev, double wrank) {
  double dev = 0.0, rank = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      if (l[i] == l[j]) continue;
      const double sgn = l[i] > l[j] ? 1.0 : -1.0;
      dev += std::abs((p[i] - p[j]) - (l[i] - l[j]));
      rank += std::max(0.0, -(p[i] - p[j]) * sgn);
      ++pairs;
    }
  }
  if (pairs == 0) return 0.0;
  return wdev * dev / static_cast<double>(pairs) + wrank * rank / static_cast<double>(pairs);
}

inline double ref_ccc_loss(const std::vector<double>& p, const std::vector<double>& l) {
  const double n = static_cast<double>(p.size());
  double mp = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mp += p[i];
    ml += l[i];
  }
  mp /= n;
  ml /= n;
  double vp = 0.0, vl = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    vp += (p[i] - mp) * (p[i] - mp);
    vl += (l[i] - ml) * (l[i] - ml);
    cov += (p[i] - mp) * (l[i] - ml);
  }
  vp /= n;
  vl /= n;
  cov /= n;
  return 1.0 - 2.0 * cov / (vp + vl + (mp - ml) * (mp - ml));
}

}  // namespace aqa::test
