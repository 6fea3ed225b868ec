#pragma once

#include <map>
#include <string>
#include <vector>

#include "passt/embed.hpp"
#include "passt/manifest.hpp"

namespace passt {

struct ProbeConfig {
  std::vector<size_t> hidden = {1024};  // ReLU between layers
  int epochs = 200;
  size_t batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;
  int patience = 10;  // early stop on validation loss
  std::uint64_t seed = 1;
};

// Shallow MLP trained on frozen embeddings. The embeddings are inputs only;
// no gradient ever reaches them.
struct ProbeModel {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  size_t in_dim = 0;
  size_t out_dim = 0;

  std::vector<Tensor> params() const;
};

struct ProbeResult {
  ProbeModel model;
  std::vector<double> train_losses;
  std::vector<double> valid_losses;
  int best_epoch = -1;
};

ProbeResult train_probe(const EmbeddingMatrix& train_x,
                        const std::vector<std::vector<double>>& train_y,
                        const EmbeddingMatrix& valid_x,
                        const std::vector<std::vector<double>>& valid_y,
                        const ProbeConfig& cfg, bool multilabel);

// Logits for every row of x.
Tensor probe_scores(const ProbeModel& probe, const EmbeddingMatrix& x);

// ---- metrics ----

double accuracy(const Tensor& logits, const std::vector<size_t>& label_idx);

// Macro mAP: average precision per class (precision at each positive's rank,
// stable order breaking ties), averaged over classes with at least one
// positive. An all-zero target matrix is an error.
double mean_average_precision(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<int>>& targets);

struct OnsetScore {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  size_t tp = 0, fp = 0, fn = 0;
};

// Threshold frame activity into events, drop events shorter than min_dur_ms,
// then greedily match predicted onsets to the nearest unmatched reference
// onset of the same class within tol_ms. Empty predictions give F1 = 0.
OnsetScore onset_f1(const std::vector<std::vector<double>>& frame_probs,
                    const std::vector<double>& frame_times_ms,
                    const std::vector<EventLabel>& reference,
                    const std::vector<std::string>& vocabulary,
                    double threshold = 0.5, double min_dur_ms = 60.0,
                    double tol_ms = 200.0);

// ---- score normalization / aggregation ----

struct TaskScore {
  std::string task;
  double raw = 0.0;
  std::string category;
};

struct NormalizedScore {
  std::string task;
  double raw = 0.0;
  double reference_max = 0.0;
  double normalized = 0.0;
  std::string category;
};

struct CategoryStats {
  std::string category;
  size_t count = 0;
  double median = 0.0, q1 = 0.0, q3 = 0.0, min = 0.0, max = 0.0;
};

struct ScoreReport {
  std::vector<NormalizedScore> scores;
  std::vector<CategoryStats> categories;  // ordered: general, music, speech
};

// normalized = raw / reference_max; a model matching the reference max is
// exactly 1. Per-category median/quartiles (linear interpolation), min, max.
ScoreReport normalize_and_aggregate(
    const std::vector<TaskScore>& raw_scores,
    const std::map<std::string, double>& reference_max);

std::string score_report_to_json(const ScoreReport& report);
std::string score_report_to_csv(const ScoreReport& report);
std::string category_stats_to_csv(const ScoreReport& report);

}  // namespace passt
