#pragma once

// Brute-force reference implementations used as test oracles. Each one is
// written independently of the library code it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "embcap/common.hpp"
#include "embcap/grid.hpp"

namespace oracle {

using Gram = std::vector<std::string>;

inline std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<Gram> grams(const std::vector<std::string>& t, std::size_t n) {
  std::vector<Gram> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
  return out;
}

inline int count_of(const std::vector<Gram>& gs, const Gram& g) {
  return static_cast<int>(std::count(gs.begin(), gs.end(), g));
}

// Sentence BLEU-4 with clipped counts, 1e-9 smoothing on zero matches and the
// closest-reference brevity penalty (shorter reference on ties).
inline double bleu4(const std::string& pred, const std::vector<std::string>& refs) {
  const auto p = words(pred);
  if (p.empty() || refs.empty()) return 0.0;
  double prod = 1.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto pg = grams(p, n);
    std::vector<Gram> distinct;
    for (const auto& g : pg) {
      if (std::find(distinct.begin(), distinct.end(), g) == distinct.end()) distinct.push_back(g);
    }
    double matched = 0.0;
    for (const auto& g : distinct) {
      int best = 0;
      for (const auto& r : refs) best = std::max(best, count_of(grams(words(r), n), g));
      matched += std::min(count_of(pg, g), best);
    }
    const double total = pg.empty() ? 1.0 : static_cast<double>(pg.size());
    prod *= (matched > 0.0 ? matched : 1e-9) / total;
  }
  const double c = static_cast<double>(p.size());
  double r_len = -1.0;
  for (const auto& r : refs) {
    const double len = static_cast<double>(words(r).size());
    if (r_len < 0.0 || std::abs(len - c) < std::abs(r_len - c) ||
        (std::abs(len - c) == std::abs(r_len - c) && len < r_len)) {
      r_len = len;
    }
  }
  const double bp = c > r_len ? 1.0 : std::exp(1.0 - r_len / c);
  return 100.0 * bp * std::pow(prod, 0.25);
}

// Longest common subsequence by enumerating every subsequence of the shorter
// sequence (inputs stay under ~16 tokens).
inline std::size_t lcs_brute(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << s.size()); ++mask) {
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(s[i]);
    }
    if (sub.size() <= best) continue;
    std::size_t j = 0;
    for (const auto& w : l) {
      if (j < sub.size() && sub[j] == w) ++j;
    }
    if (j == sub.size()) best = sub.size();
  }
  return best;
}

inline double rouge_l(const std::string& pred, const std::string& ref, double beta = 1.2) {
  const auto p = words(pred), r = words(ref);
  if (p.empty() || r.empty()) return 0.0;
  const double l = static_cast<double>(lcs_brute(p, r));
  if (l == 0.0) return 0.0;
  const double prec = l / p.size(), rec = l / r.size();
  return 100.0 * (1 + beta * beta) * prec * rec / (rec + beta * beta * prec);
}

// Corpus CIDEr: tf-idf n-gram vectors, df over reference sets, averaged
// cosine over references and n = 1..4, times 10.
inline double cider(const std::vector<std::string>& preds, const std::vector<std::vector<std::string>>& refs) {
  const double n_docs = static_cast<double>(refs.size());
  auto df = [&](const Gram& g) {
    int d = 0;
    for (const auto& set : refs) {
      bool found = false;
      for (const auto& r : set) found = found || count_of(grams(words(r), g.size()), g) > 0;
      d += found;
    }
    return d;
  };
  auto vec = [&](const std::string& s, std::size_t n) {
    std::vector<std::pair<Gram, double>> v;
    const auto gs = grams(words(s), n);
    for (const auto& g : gs) {
      auto it = std::find_if(v.begin(), v.end(), [&](const auto& e) { return e.first == g; });
      if (it != v.end()) continue;
      v.emplace_back(g, count_of(gs, g) * (std::log(n_docs) - std::log(std::max(1, df(g)))));
    }
    return v;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double s = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto pv = vec(preds[i], n);
      double acc = 0.0;
      for (const auto& r : refs[i]) {
        const auto rv = vec(r, n);
        double dot = 0.0, np = 0.0, nr = 0.0;
        for (const auto& [g, w] : pv) {
          np += w * w;
          for (const auto& [h, u] : rv) {
            if (g == h) dot += w * u;
          }
        }
        for (const auto& e : rv) nr += e.second * e.second;
        if (np > 0 && nr > 0) acc += dot / std::sqrt(np * nr);
      }
      s += acc / refs[i].size();
    }
    total += 10.0 * s / 4.0;
  }
  return total / preds.size();
}

// 26-connected components of equal non-zero labels on a dense grid.
// Returns each component as its sorted list of (x, y, z).
inline std::set<std::vector<std::array<int, 3>>> flood_fill(const std::vector<int>& labels, int n) {
  std::vector<bool> seen(labels.size(), false);
  auto id = [n](int x, int y, int z) { return (static_cast<std::size_t>(z) * n + y) * n + x; };
  std::set<std::vector<std::array<int, 3>>> out;
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const int lab = labels[id(x, y, z)];
        if (lab == 0 || seen[id(x, y, z)]) continue;
        std::vector<std::array<int, 3>> comp;
        std::vector<std::array<int, 3>> stack{{x, y, z}};
        seen[id(x, y, z)] = true;
        while (!stack.empty()) {
          const auto c = stack.back();
          stack.pop_back();
          comp.push_back(c);
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                const int a = c[0] + dx, b = c[1] + dy, e = c[2] + dz;
                if (a < 0 || b < 0 || e < 0 || a >= n || b >= n || e >= n) continue;
                if (seen[id(a, b, e)] || labels[id(a, b, e)] != lab) continue;
                seen[id(a, b, e)] = true;
                stack.push_back({a, b, e});
              }
            }
          }
        }
        std::sort(comp.begin(), comp.end());
        out.insert(comp);
      }
    }
  }
  return out;
}

// Shortest path cost by plain BFS on an expanded graph where entering a cell
// of cost w is a chain of w unit edges. -1 when unreachable.
inline long bfs_cost(const embcap::ExplorationGrid& g, embcap::Cell start, embcap::Cell goal, int unknown_cost) {
  using embcap::CellState;
  const int k = g.size();
  const int layers = std::max(1, unknown_cost);
  // State (r, c, j): j unit edges still to walk before arriving in (r, c).
  std::vector<long> dist(static_cast<std::size_t>(k) * k * layers, -1);
  auto sid = [&](int r, int c, int j) { return (static_cast<std::size_t>(r) * k + c) * layers + j; };
  std::deque<std::array<int, 3>> q;
  dist[sid(start.row, start.col, 0)] = 0;
  q.push_back({start.row, start.col, 0});
  while (!q.empty()) {
    const auto [r, c, j] = q.front();
    q.pop_front();
    const long d = dist[sid(r, c, j)];
    if (j > 0) {
      if (dist[sid(r, c, j - 1)] < 0) {
        dist[sid(r, c, j - 1)] = d + 1;
        q.push_back({r, c, j - 1});
      }
      continue;
    }
    if (r == goal.row && c == goal.col) return d;
    const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
    for (int s = 0; s < 4; ++s) {
      const int nr = r + dr[s], nc = c + dc[s];
      if (nr < 0 || nc < 0 || nr >= k || nc >= k) continue;
      const CellState st = g.at({nr, nc});
      if (st == CellState::Occupied) continue;
      const int w = st == CellState::Unknown ? unknown_cost : 1;
      // Arriving after w edges means starting the chain at layer w - 1.
      if (dist[sid(nr, nc, w - 1)] < 0) {
        dist[sid(nr, nc, w - 1)] = d + 1;
        q.push_back({nr, nc, w - 1});
      }
    }
  }
  return -1;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
inline double sign_test_p(int wins, int trials) {
  double p = 0.0;
  for (int k = wins; k <= trials; ++k) {
    p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) -
                  trials * std::log(2.0));
  }
  return p;
}

}  // namespace oracle
