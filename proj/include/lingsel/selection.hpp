#pragma once

// Duration-budgeted utterance selection from decision-score rankings.
//
// Multi-list selection: with L = L0, repeatedly take the top-L prefixes of
// three rankings and append, in the first list's order, every utterance
// that is in all three prefixes and not yet selected; grow L by L0 until
// the selected duration reaches the budget.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lingsel/corpus_io.hpp"
#include "lingsel/error.hpp"
#include "lingsel/numcore.hpp"

namespace lingsel {

struct ScoredId {
  std::string id;
  double score = 0.0;
  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// Sorted by (score desc, id asc); ids unique.
using ScoredList = std::vector<ScoredId>;

enum class Strategy { ensemble, single, random };

struct SelectionConfig {
  double budget_sec = 3600.0;  ///< k hours, held in seconds
  std::size_t l0 = 1000;       ///< initial ranking limit, also the growth step
  Strategy strategy = Strategy::ensemble;
  std::uint64_t seed = 0;     ///< random strategy only
  bool tight_budget = false;  ///< re-check the budget before every append

  static SelectionConfig from_hours(double hours) {
    SelectionConfig c;
    c.budget_sec = hours * 3600.0;
    return c;
  }
};

inline void validate(const SelectionConfig& c) {
  if (!(c.budget_sec > 0.0) || !std::isfinite(c.budget_sec)) {
    throw UsageError("budget must be positive and finite");
  }
  if (c.l0 < 1) throw UsageError("l0 must be at least 1");
}

struct SelectionResult {
  std::vector<std::string> selected;
  double total_sec = 0.0;
  bool exhausted = false;  ///< the candidates ran out before the budget
  std::size_t passes = 0;  ///< while-loop iterations (ensemble only)
};

inline ScoredList rank_pool(std::span<const ScoredId> scores, const DurationMap& durations) {
  ScoredList list(scores.begin(), scores.end());
  std::unordered_set<std::string> seen;
  for (const auto& s : list) {
    if (std::isnan(s.score)) throw DataError("score for \"" + s.id + "\" is NaN");
    if (!durations.contains(s.id)) throw DataError("no duration for scored id \"" + s.id + "\"");
    if (!seen.insert(s.id).second) throw DataError("id \"" + s.id + "\" is scored twice");
  }
  std::sort(list.begin(), list.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return list;
}

namespace detail {

inline double duration_of(const DurationMap& durations, const std::string& id) {
  const auto it = durations.find(id);
  if (it == durations.end()) throw DataError("no duration for id \"" + id + "\"");
  return it->second;
}

inline std::unordered_set<std::string> prefix_set(const ScoredList& list, std::size_t limit) {
  std::unordered_set<std::string> out;
  const std::size_t n = std::min(limit, list.size());
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.insert(list[i].id);
  return out;
}

/// Greedy prefix in the given order until total >= budget.
template <typename Ids>
SelectionResult greedy_prefix(const Ids& ids, const DurationMap& durations, double budget) {
  SelectionResult r;
  for (const auto& id : ids) {
    if (r.total_sec >= budget) break;
    r.selected.push_back(id);
    r.total_sec += duration_of(durations, id);
  }
  r.exhausted = r.total_sec < budget;
  return r;
}

}  // namespace detail

/// u1 drives admission order. The budget is checked at the top of each pass
/// (so one pass may overshoot) unless tight_budget is set. A pass that adds
/// nothing once L covers every list ends the loop with exhausted = true.
inline SelectionResult select_ensemble(const ScoredList& u1, const ScoredList& u2,
                                       const ScoredList& u3, const DurationMap& durations,
                                       const SelectionConfig& config) {
  validate(config);
  SelectionResult r;
  std::unordered_set<std::string> chosen;
  const std::size_t longest = std::max({u1.size(), u2.size(), u3.size()});
  std::size_t limit = config.l0;
  while (r.total_sec < config.budget_sec) {
    ++r.passes;
    const auto top2 = detail::prefix_set(u2, limit);
    const auto top3 = detail::prefix_set(u3, limit);
    const std::size_t before = r.selected.size();
    bool budget_hit = false;
    for (std::size_t i = 0; i < std::min(limit, u1.size()); ++i) {
      const auto& id = u1[i].id;
      if (chosen.contains(id) || !top2.contains(id) || !top3.contains(id)) continue;
      if (config.tight_budget && r.total_sec >= config.budget_sec) {
        budget_hit = true;
        break;
      }
      chosen.insert(id);
      r.selected.push_back(id);
      r.total_sec += detail::duration_of(durations, id);
    }
    if (budget_hit) break;
    if (r.selected.size() == before && limit >= longest && r.total_sec < config.budget_sec) {
      r.exhausted = true;
      break;
    }
    limit += config.l0;
  }
  return r;
}

/// Greedy prefix of one ranking.
inline SelectionResult select_single(const ScoredList& u, const DurationMap& durations,
                                     const SelectionConfig& config) {
  validate(config);
  std::vector<std::string> ids;
  ids.reserve(u.size());
  for (const auto& s : u) ids.push_back(s.id);
  return detail::greedy_prefix(ids, durations, config.budget_sec);
}

/// Seeded uniform shuffle of the pool, then greedy prefix.
inline SelectionResult select_random(std::span<const std::string> pool_ids,
                                     const DurationMap& durations,
                                     const SelectionConfig& config) {
  validate(config);
  std::vector<std::string> ids(pool_ids.begin(), pool_ids.end());
  SplitMix64 rng(config.seed);
  rng.shuffle(ids);
  return detail::greedy_prefix(ids, durations, config.budget_sec);
}

}  // namespace lingsel
