#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minidrive/dataset.hpp"
#include "minidrive/learner.hpp"

namespace minidrive {

enum class OodMetric { euclidean, cosine };

std::string metric_name(OodMetric m);

struct ReferenceSet {
  std::vector<std::vector<double>> embeddings;
  OodMetric metric = OodMetric::euclidean;
  TapLocation location = TapLocation::post_activation;
  std::uint64_t source_hash = 0;
};

// Mean of the k smallest metric distances from query to the reference rows.
// Exact brute force. Cosine distance is 1 - cosine similarity; zero vectors
// map to distance 1. Throws when k exceeds the reference size.
double knn_distance(const ReferenceSet& reference, const std::vector<double>& query, int k = 5);

// Batch form; computes Euclidean and cosine in one pass over the references.
struct KnnBatchResult {
  std::vector<double> euclidean;
  std::vector<double> cosine;
};
KnnBatchResult knn_distances(const std::vector<std::vector<double>>& reference,
                             const std::vector<std::vector<double>>& queries, int k, int jobs);

// Probability that a random positive outranks a random negative, ties at
// one half; equals trapezoidal ROC integration.
double auroc(const std::vector<double>& negatives, const std::vector<double>& positives);

struct OodCell {
  std::string train_speed;  // "slow" or "fast"
  OodMetric metric = OodMetric::euclidean;
  TapLocation location = TapLocation::post_activation;
  int fold = 0;
  double mean_dist_same = 0.0;
  double mean_dist_novel = 0.0;
  double auroc = 0.0;
};

struct OodAggregate {
  std::string train_speed;
  OodMetric metric = OodMetric::euclidean;
  double mean_dist_same = 0.0;   // averaged over folds and locations
  double mean_dist_novel = 0.0;
  double mean_auroc = 0.0;
};

struct OodReport {
  std::vector<OodCell> cells;
  std::vector<OodAggregate> aggregates;
};

struct OodStudySide {
  std::string name;                       // "slow" / "fast"
  const std::vector<Policy>* fold_models = nullptr;
  const ShiftedDataset* dataset = nullptr;
  const std::vector<int>* fold_assignment = nullptr;
  const ShiftedDataset* novel_dataset = nullptr;  // entire other-speed set
};

// Loops speed x metric x extraction location x fold: reference activations
// from the fold's training split, same-speed scores from its validation
// split, novel scores from the full other-speed set, AUROC with labels
// same=0 / novel=1. Deterministic given models and datasets.
OodReport run_ood_study(const std::vector<OodStudySide>& sides, int k = 5, int jobs = 1);

// 3-frame stacks from every other frame of a slow recording: frames
// (i-4, i-2, i) with the label at i. Doubles the apparent motion while
// reusing identical frames and labels.
ShiftedDataset synth_fast_by_frameskip(const Recording& slow);

}  // namespace minidrive
