#pragma once

#include <algorithm>
#include <cstddef>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mrgrp/domain.hpp"

namespace mrgrp {

/// A predicted full route against a (possibly truncated) ground truth whose
/// tasks all occur in the prediction.
struct EvalPair {
  std::vector<int> predicted;
  std::vector<int> truth;
  std::vector<Location> locations;  // indexed by task id; needed by SR@k only
};

namespace detail {

inline std::unordered_map<int, std::size_t> positions(const std::vector<int>& seq) {
  std::unordered_map<int, std::size_t> pos;
  for (std::size_t i = 0; i < seq.size(); ++i) pos.emplace(seq[i], i);
  return pos;
}

}  // namespace detail

/// Kendall rank correlation over in-truth pairs plus (in-truth, out-of-truth)
/// pairs, the latter ranked in-truth first. 1.0 when nothing is comparable.
inline double krc(const EvalPair& p) {
  const auto truth_pos = detail::positions(p.truth);
  std::vector<std::size_t> in_pred_pos;   // prediction positions of in-truth tasks
  std::vector<std::size_t> in_truth_pos;  // matching truth positions
  std::vector<std::size_t> out_pred_pos;
  for (std::size_t i = 0; i < p.predicted.size(); ++i) {
    auto it = truth_pos.find(p.predicted[i]);
    if (it == truth_pos.end()) {
      out_pred_pos.push_back(i);
    } else {
      in_pred_pos.push_back(i);
      in_truth_pos.push_back(it->second);
    }
  }
  long concordant = 0, discordant = 0;
  for (std::size_t a = 0; a < in_pred_pos.size(); ++a) {
    for (std::size_t b = a + 1; b < in_pred_pos.size(); ++b) {
      // in_pred_pos is increasing, so the prediction ranks a before b.
      (in_truth_pos[a] < in_truth_pos[b] ? concordant : discordant) += 1;
    }
    for (std::size_t o : out_pred_pos) (in_pred_pos[a] < o ? concordant : discordant) += 1;
  }
  if (concordant + discordant == 0) return 1.0;
  return static_cast<double>(concordant - discordant) / static_cast<double>(concordant + discordant);
}

/// Mean squared displacement of each truth task between truth and prediction.
inline double lsd(const EvalPair& p) {
  if (p.truth.empty()) return 0.0;
  const auto pred_pos = detail::positions(p.predicted);
  double s = 0.0;
  for (std::size_t i = 0; i < p.truth.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(pred_pos.at(p.truth[i]));
    s += d * d;
  }
  return s / static_cast<double>(p.truth.size());
}

/// Levenshtein distance with unit costs.
inline std::size_t edit_distance(const EvalPair& p) {
  const auto& a = p.predicted;
  const auto& b = p.truth;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Length of the positional prefix whose predicted and true tasks lie
/// strictly closer than k_meters, over the truth length.
inline double same_rate_at(const EvalPair& p, double k_meters) {
  if (p.truth.empty()) return 1.0;
  const std::size_t limit = std::min(p.truth.size(), p.predicted.size());
  std::size_t prefix = 0;
  while (prefix < limit) {
    const auto& a = p.locations.at(static_cast<std::size_t>(p.predicted[prefix]));
    const auto& b = p.locations.at(static_cast<std::size_t>(p.truth[prefix]));
    if (!(distance(a, b) < k_meters)) break;
    ++prefix;
  }
  return static_cast<double>(prefix) / static_cast<double>(p.truth.size());
}

/// |top-k(pred) ∩ top-min(k,m)(truth)| / k.
inline double hit_rate_at(const EvalPair& p, std::size_t k) {
  const std::size_t kp = std::min(k, p.predicted.size());
  const std::size_t kt = std::min(k, p.truth.size());
  std::unordered_set<int> top(p.truth.begin(), p.truth.begin() + static_cast<std::ptrdiff_t>(kt));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < kp; ++i) hits += top.count(p.predicted[i]);
  return static_cast<double>(hits) / static_cast<double>(k);
}

/// 1 iff the first min(k, m) predicted tasks equal the truth's.
inline int acc_at(const EvalPair& p, std::size_t k) {
  const std::size_t lim = std::min(k, p.truth.size());
  for (std::size_t i = 0; i < lim; ++i)
    if (i >= p.predicted.size() || p.predicted[i] != p.truth[i]) return 0;
  return 1;
}

struct MetricValues {
  double krc = 0.0;
  double lsd = 0.0;
  double ed = 0.0;
  double sr1 = 0.0;
  double sr200 = 0.0;
  double hr1 = 0.0;
  double acc3 = 0.0;
};

inline MetricValues compute_metrics(const EvalPair& p) {
  return {krc(p),
          lsd(p),
          static_cast<double>(edit_distance(p)),
          same_rate_at(p, 1.0),
          same_rate_at(p, 200.0),
          hit_rate_at(p, 1),
          static_cast<double>(acc_at(p, 3))};
}

inline EvalPair make_eval_pair(const ProblemInstance& inst, std::vector<int> predicted, std::vector<int> truth) {
  EvalPair p{std::move(predicted), std::move(truth), {}};
  p.locations.resize(inst.size());
  for (const auto& t : inst.tasks) p.locations[static_cast<std::size_t>(t.task_id)] = t.location;
  return p;
}

/// Running means of every metric.
struct MetricAccumulator {
  MetricValues sum;
  std::size_t count = 0;

  void add(const MetricValues& v) {
    sum.krc += v.krc;
    sum.lsd += v.lsd;
    sum.ed += v.ed;
    sum.sr1 += v.sr1;
    sum.sr200 += v.sr200;
    sum.hr1 += v.hr1;
    sum.acc3 += v.acc3;
    ++count;
  }

  MetricValues mean() const {
    if (count == 0) return {};
    const double c = static_cast<double>(count);
    return {sum.krc / c, sum.lsd / c, sum.ed / c, sum.sr1 / c, sum.sr200 / c, sum.hr1 / c, sum.acc3 / c};
  }
};

}  // namespace mrgrp
