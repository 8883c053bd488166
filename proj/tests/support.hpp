#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "lingsel/dsvdd.hpp"
#include "lingsel/numcore.hpp"
#include "lingsel/selection.hpp"

namespace testing_support {

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lingsel-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void spit(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
}

/// n x d matrix of standard normals.
inline lingsel::Matrix gaussian_matrix(std::size_t n, std::size_t d, std::uint64_t seed,
                                       double shift = 0.0) {
  lingsel::SplitMix64 rng(seed);
  lingsel::Matrix m(n, d);
  for (double& v : m.values()) v = rng.gaussian() + shift;
  return m;
}

/// Multi-list selection written as a literal, index-based walk of the
/// published loop, sharing no code with the library. The only additions are
/// the exhaustion guard and the optional per-append budget check.
struct OracleTrace {
  std::vector<std::string> selected;
  double total = 0.0;
  bool exhausted = false;
  std::size_t passes = 0;
};

inline OracleTrace oracle_ensemble(const std::vector<std::string>& u1,
                                   const std::vector<std::string>& u2,
                                   const std::vector<std::string>& u3,
                                   const std::vector<std::pair<std::string, double>>& durations,
                                   double k_sec, std::size_t l0, bool tight = false) {
  auto dur = [&](const std::string& id) {
    for (const auto& [name, d] : durations) {
      if (name == id) return d;
    }
    return -1.0;
  };
  auto in_prefix = [](const std::vector<std::string>& u, std::size_t len, const std::string& id) {
    for (std::size_t i = 0; i < len && i < u.size(); ++i) {
      if (u[i] == id) return true;
    }
    return false;
  };
  auto in_r = [](const std::vector<std::string>& r, const std::string& id) {
    for (const auto& x : r) {
      if (x == id) return true;
    }
    return false;
  };
  std::size_t longest = u1.size();
  if (u2.size() > longest) longest = u2.size();
  if (u3.size() > longest) longest = u3.size();

  OracleTrace t;
  std::size_t L = l0;
  while (t.total < k_sec) {
    t.passes += 1;
    std::size_t added = 0;
    bool stop = false;
    for (std::size_t i = 0; i < L && i < u1.size(); ++i) {
      const std::string& u = u1[i];
      if (in_r(t.selected, u)) continue;
      if (!in_prefix(u2, L, u)) continue;
      if (!in_prefix(u3, L, u)) continue;
      if (tight && t.total >= k_sec) {
        stop = true;
        break;
      }
      t.selected.push_back(u);
      t.total += dur(u);
      added += 1;
    }
    if (stop) break;
    if (added == 0 && L >= longest && t.total < k_sec) {
      t.exhausted = true;
      break;
    }
    L += l0;
  }
  return t;
}

/// Signs of every leaky-ReLU pre-activation over a batch.
inline std::vector<bool> kink_signs(const lingsel::EncoderNet& net, const lingsel::Matrix& batch) {
  std::vector<bool> out;
  lingsel::detail::EncoderTape t;
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    lingsel::detail::encode(net, batch.row(b), t);
    for (double a : t.a1) out.push_back(a > 0.0);
    for (double a : t.a2) out.push_back(a > 0.0);
  }
  return out;
}

inline std::vector<bool> kink_signs(const lingsel::Autoencoder& ae, const lingsel::Matrix& batch) {
  auto out = kink_signs(ae.encoder, batch);
  lingsel::detail::EncoderTape et;
  lingsel::detail::DecoderTape dt;
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    lingsel::detail::encode(ae.encoder, batch.row(b), et);
    lingsel::detail::decode(ae.decoder, ae.encoder, et.z, dt);
    for (double a : dt.b0) out.push_back(a > 0.0);
    for (double a : dt.b1) out.push_back(a > 0.0);
  }
  return out;
}

struct GradCheck {
  double max_rel = 0.0;      ///< over probes whose interval is kink-free
  std::size_t probes = 0;
  std::size_t straddled = 0;  ///< probes whose +-eps interval crosses a kink
};

/// Central differences with step eps against `grads`. A probe that misses
/// the tolerance is excluded only if some pre-activation changes sign
/// between w - eps and w + eps, where the loss is not differentiable.
/// `pick(p, size)` lists the entries of tensor p to probe.
template <typename Net, typename Loss, typename Pick>
GradCheck finite_difference_check(Net& net, const lingsel::Matrix& batch,
                                  const std::vector<std::vector<double>>& grads, Loss&& loss,
                                  Pick&& pick, double eps, double tol) {
  GradCheck r;
  auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& w = *params[p];
    for (std::size_t i : pick(p, w.size())) {
      const double keep = w[i];
      w[i] = keep + eps;
      const double up = loss();
      w[i] = keep - eps;
      const double down = loss();
      const double numeric = (up - down) / (2.0 * eps);
      const double scale = std::max({std::abs(numeric), std::abs(grads[p][i]), 1e-6});
      const double rel = std::abs(numeric - grads[p][i]) / scale;
      ++r.probes;
      if (rel >= tol) {
        const auto below = kink_signs(net, batch);
        w[i] = keep + eps;
        const bool straddles = kink_signs(net, batch) != below;
        w[i] = keep;
        if (straddles) {
          ++r.straddled;
          continue;
        }
      }
      w[i] = keep;
      r.max_rel = std::max(r.max_rel, rel);
    }
  }
  return r;
}

inline std::vector<std::size_t> every_index(std::size_t, std::size_t size) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  return idx;
}

inline std::vector<std::string> ids_of(const lingsel::ScoredList& list) {
  std::vector<std::string> out;
  for (const auto& s : list) out.push_back(s.id);
  return out;
}

}  // namespace testing_support
