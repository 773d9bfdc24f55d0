#include "mvmol/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace mvmol {

int rank_of(const std::vector<double>& scores, int truth) {
  require(truth >= 0 && truth < static_cast<int>(scores.size()), ErrorKind::Value,
          "rank_of: truth index out of range");
  int rank = 1;
  for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
    if (j == truth) continue;
    const double s = scores[static_cast<size_t>(j)];
    const double st = scores[static_cast<size_t>(truth)];
    if (s > st || (s == st && j < truth)) ++rank;
  }
  return rank;
}

RetrievalMetrics metrics_from_ranks(const std::vector<int>& ranks) {
  require(!ranks.empty(), ErrorKind::Value, "metrics: no queries");
  RetrievalMetrics m;
  for (int r : ranks) {
    m.mrr += 1.0 / r;
    if (r <= 1) m.r1 += 1.0;
    if (r <= 5) m.r5 += 1.0;
    if (r <= 10) m.r10 += 1.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.r1 /= n;
  m.r5 /= n;
  m.r10 /= n;
  return m;
}

RetrievalMetrics metrics_from_scores(const std::vector<std::vector<double>>& scores,
                                     const std::vector<int>& truth) {
  require(scores.size() == truth.size(), ErrorKind::Value, "metrics: one truth per query");
  std::vector<int> ranks;
  for (size_t q = 0; q < scores.size(); ++q) ranks.push_back(rank_of(scores[q], truth[q]));
  return metrics_from_ranks(ranks);
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size() && !scores.empty(), ErrorKind::Value,
          "auroc: scores/labels mismatch");
  int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, ErrorKind::Value, "auroc: labels must be 0/1");
    y == 1 ? ++n_pos : ++n_neg;
  }
  require(n_pos > 0 && n_neg > 0, ErrorKind::Value, "auroc: both classes required");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // average ranks over tie groups, then the Mann-Whitney statistic
  std::vector<double> rank(scores.size(), 0.0);
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (size_t k = 0; k < scores.size(); ++k)
    if (labels[k] == 1) pos_rank_sum += rank[k];
  const double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<std::string, RetrievalMetrics>>& rows) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << "direction,mrr,r1,r5,r10\n";
  out.precision(9);
  for (const auto& [name, m] : rows)
    out << name << "," << m.mrr << "," << m.r1 << "," << m.r5 << "," << m.r10 << "\n";
}

}  // namespace mvmol
