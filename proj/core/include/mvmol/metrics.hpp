#pragma once

#include <string>
#include <vector>

#include "mvmol/error.hpp"

namespace mvmol {

struct RetrievalMetrics {
  double mrr = 0.0;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
};

/// 1-based rank of `truth` when candidates are ordered by descending score,
/// ties broken by ascending candidate index (the global tie rule of the
/// retrieval engine).
int rank_of(const std::vector<double>& scores, int truth);

/// MRR and recall@k from a dense query x candidate score matrix with one
/// true candidate per query.
RetrievalMetrics metrics_from_scores(const std::vector<std::vector<double>>& scores,
                                     const std::vector<int>& truth);

RetrievalMetrics metrics_from_ranks(const std::vector<int>& ranks);

/// Area under the ROC curve by the rank statistic, ties handled by average
/// ranks. Scores must contain both classes.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<std::string, RetrievalMetrics>>& rows);

}  // namespace mvmol
