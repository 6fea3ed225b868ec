#include "passt/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "passt/optim.hpp"
#include "passt/rng.hpp"

namespace passt {

using nlohmann::json;

std::vector<Tensor> ProbeModel::params() const {
  std::vector<Tensor> out;
  for (size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

namespace {

Tensor rows_to_tensor(const EmbeddingMatrix& x, const std::vector<size_t>& idx) {
  Tensor t({idx.size(), x.dim});
  for (size_t i = 0; i < idx.size(); ++i)
    for (size_t c = 0; c < x.dim; ++c)
      t.data()[i * x.dim + c] = static_cast<double>(x.at(idx[i], c));
  return t;
}

Tensor labels_to_tensor(const std::vector<std::vector<double>>& y,
                        const std::vector<size_t>& idx) {
  size_t classes = y.front().size();
  Tensor t({idx.size(), classes});
  for (size_t i = 0; i < idx.size(); ++i)
    for (size_t c = 0; c < classes; ++c) t.data()[i * classes + c] = y[idx[i]][c];
  return t;
}

Tensor probe_forward(const ProbeModel& probe, const Tensor& x) {
  Tensor h = x;
  for (size_t i = 0; i < probe.weights.size(); ++i) {
    h = ops::add_rowvec(ops::matmul(h, probe.weights[i]), probe.biases[i]);
    if (i + 1 < probe.weights.size()) h = ops::relu(h);
  }
  return h;
}

std::vector<size_t> all_indices(size_t n) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  return idx;
}

}  // namespace

ProbeResult train_probe(const EmbeddingMatrix& train_x,
                        const std::vector<std::vector<double>>& train_y,
                        const EmbeddingMatrix& valid_x,
                        const std::vector<std::vector<double>>& valid_y,
                        const ProbeConfig& cfg, bool multilabel) {
  if (train_x.rows != train_y.size() || valid_x.rows != valid_y.size())
    throw Error("shape", "train_probe: embedding rows do not match label count");
  if (train_x.rows == 0) throw Error("bounds", "train_probe: empty train set");
  if (valid_x.rows == 0)
    throw Error("bounds", "train_probe: empty validation set");
  size_t classes = train_y.front().size();
  if (!multilabel) {
    // A single-class train split cannot be probed.
    std::set<size_t> present;
    for (const auto& row : train_y)
      present.insert(static_cast<size_t>(
          std::max_element(row.begin(), row.end()) - row.begin()));
    if (present.size() < 2)
      throw Error("bounds", "train_probe: train split has a single class");
  }

  Rng rng(cfg.seed);
  ProbeResult result;
  ProbeModel& probe = result.model;
  probe.in_dim = train_x.dim;
  probe.out_dim = classes;
  std::vector<size_t> dims;
  dims.push_back(train_x.dim);
  for (size_t h : cfg.hidden) dims.push_back(h);
  dims.push_back(classes);
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    double stddev = std::sqrt(2.0 / static_cast<double>(dims[i] + dims[i + 1]));
    Tensor w({dims[i], dims[i + 1]});
    for (double& v : w.data()) v = rng.normal(0.0, stddev);
    w.set_requires_grad(true);
    probe.weights.push_back(w);
    Tensor b({dims[i + 1]});
    b.set_requires_grad(true);
    probe.biases.push_back(b);
  }

  AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW opt(probe.params(), ocfg);

  Tensor vx = rows_to_tensor(valid_x, all_indices(valid_x.rows));
  Tensor vy = labels_to_tensor(valid_y, all_indices(valid_y.size()));

  double best_valid = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params;
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = rng.permutation(train_x.rows);
    double loss_sum = 0.0;
    size_t steps = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
      std::vector<size_t> idx(order.begin() + at,
                              order.begin() +
                                  std::min(order.size(), at + cfg.batch_size));
      Tensor bx = rows_to_tensor(train_x, idx);
      Tensor by = labels_to_tensor(train_y, idx);
      opt.zero_grad();
      GradTape tape;
      {
        GradTape::Scope scope(tape);
        Tensor logits = probe_forward(probe, bx);
        Tensor loss = multilabel ? ops::binary_cross_entropy(logits, by)
                                 : ops::cross_entropy(logits, by);
        loss_sum += loss.value();
        tape.backward(loss);
      }
      opt.step();
      ++steps;
    }
    result.train_losses.push_back(loss_sum / static_cast<double>(steps));

    Tensor vlogits = probe_forward(probe, vx);
    double vloss = (multilabel ? ops::binary_cross_entropy(vlogits, vy)
                               : ops::cross_entropy(vlogits, vy))
                       .value();
    result.valid_losses.push_back(vloss);
    if (vloss < best_valid) {
      best_valid = vloss;
      result.best_epoch = epoch;
      best_params.clear();
      for (const auto& p : probe.params()) best_params.push_back(p.data());
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  // restore best-validation parameters
  if (!best_params.empty()) {
    auto params = probe.params();
    for (size_t i = 0; i < params.size(); ++i) params[i].data() = best_params[i];
  }
  return result;
}

Tensor probe_scores(const ProbeModel& probe, const EmbeddingMatrix& x) {
  Tensor t = rows_to_tensor(x, all_indices(x.rows));
  return probe_forward(probe, t);
}

double accuracy(const Tensor& logits, const std::vector<size_t>& label_idx) {
  if (logits.dim(0) != label_idx.size())
    throw Error("shape", "accuracy: row count mismatch");
  size_t correct = 0;
  size_t classes = logits.dim(1);
  for (size_t i = 0; i < label_idx.size(); ++i) {
    size_t argmax = 0;
    for (size_t c = 1; c < classes; ++c)
      if (logits.at(i, c) > logits.at(i, argmax)) argmax = c;
    if (argmax == label_idx[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(label_idx.size());
}

double mean_average_precision(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<int>>& targets) {
  if (scores.size() != targets.size() || scores.empty())
    throw Error("shape", "mAP: score/target row mismatch");
  size_t n = scores.size(), classes = scores.front().size();
  double ap_sum = 0.0;
  size_t included = 0;
  for (size_t c = 0; c < classes; ++c) {
    size_t positives = 0;
    for (size_t i = 0; i < n; ++i) positives += targets[i][c] != 0;
    if (positives == 0) continue;  // classes with no positives are excluded
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return scores[a][c] > scores[b][c];
    });
    size_t hits = 0;
    double ap = 0.0;
    for (size_t rank = 0; rank < n; ++rank) {
      if (targets[order[rank]][c] != 0) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    ap_sum += ap / static_cast<double>(positives);
    ++included;
  }
  if (included == 0)
    throw Error("bounds", "mAP: target matrix has no positives");
  return ap_sum / static_cast<double>(included);
}

namespace {

struct DecodedEvent {
  double onset_ms;
  size_t cls;
};

}  // namespace

OnsetScore onset_f1(const std::vector<std::vector<double>>& frame_probs,
                    const std::vector<double>& frame_times_ms,
                    const std::vector<EventLabel>& reference,
                    const std::vector<std::string>& vocabulary,
                    double threshold, double min_dur_ms, double tol_ms) {
  if (frame_probs.size() != frame_times_ms.size())
    throw Error("shape", "onset_f1: frame count mismatch");
  for (size_t i = 1; i < frame_times_ms.size(); ++i)
    if (frame_times_ms[i] <= frame_times_ms[i - 1])
      throw Error("bounds", "onset_f1: frame times must increase");

  size_t classes = vocabulary.size();
  double hop = frame_times_ms.size() >= 2
                   ? frame_times_ms[1] - frame_times_ms[0]
                   : 0.0;

  // Threshold + merge consecutive active frames into events per class.
  std::vector<DecodedEvent> predictions;
  for (size_t c = 0; c < classes; ++c) {
    size_t i = 0;
    while (i < frame_probs.size()) {
      if (frame_probs[i].at(c) < threshold) {
        ++i;
        continue;
      }
      size_t j = i;
      while (j + 1 < frame_probs.size() && frame_probs[j + 1].at(c) >= threshold)
        ++j;
      double duration = (static_cast<double>(j - i) + 1.0) * hop;
      if (duration >= min_dur_ms) predictions.push_back({frame_times_ms[i], c});
      i = j + 1;
    }
  }

  auto class_index = [&](const std::string& label) {
    auto it = std::find(vocabulary.begin(), vocabulary.end(), label);
    if (it == vocabulary.end())
      throw Error("format", "onset_f1: unknown event label " + label);
    return static_cast<size_t>(it - vocabulary.begin());
  };

  std::vector<DecodedEvent> refs;
  for (const auto& e : reference) refs.push_back({e.onset_ms, class_index(e.label)});
  std::sort(refs.begin(), refs.end(),
            [](const DecodedEvent& a, const DecodedEvent& b) {
              return a.onset_ms < b.onset_ms;
            });
  std::sort(predictions.begin(), predictions.end(),
            [](const DecodedEvent& a, const DecodedEvent& b) {
              return a.onset_ms < b.onset_ms;
            });

  std::vector<bool> matched(refs.size(), false);
  size_t tp = 0;
  for (const auto& pred : predictions) {
    long best = -1;
    double best_dist = tol_ms;
    for (size_t r = 0; r < refs.size(); ++r) {
      if (matched[r] || refs[r].cls != pred.cls) continue;
      double dist = std::abs(refs[r].onset_ms - pred.onset_ms);
      if (dist <= best_dist) {
        best_dist = dist;
        best = static_cast<long>(r);
      }
    }
    if (best >= 0) {
      matched[best] = true;
      ++tp;
    }
  }
  OnsetScore score;
  score.tp = tp;
  score.fp = predictions.size() - tp;
  score.fn = refs.size() - tp;
  if (refs.empty() && predictions.empty()) {
    score.f1 = score.precision = score.recall = 1.0;
    return score;
  }
  score.precision = predictions.empty()
                        ? 0.0
                        : static_cast<double>(tp) / predictions.size();
  score.recall = refs.empty() ? 0.0 : static_cast<double>(tp) / refs.size();
  score.f1 = (2.0 * tp + score.fp + score.fn) == 0
                 ? 0.0
                 : 2.0 * tp / (2.0 * tp + score.fp + score.fn);
  return score;
}

namespace {

double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  double pos = p * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

ScoreReport normalize_and_aggregate(
    const std::vector<TaskScore>& raw_scores,
    const std::map<std::string, double>& reference_max) {
  ScoreReport report;
  std::map<std::string, std::vector<double>> by_category;
  for (const auto& task : raw_scores) {
    auto it = reference_max.find(task.task);
    if (it == reference_max.end())
      throw Error("format", "no reference max for task " + task.task);
    if (it->second <= 0.0)
      throw Error("bounds", "reference max for task " + task.task +
                                " must be positive");
    NormalizedScore score;
    score.task = task.task;
    score.raw = task.raw;
    score.reference_max = it->second;
    score.normalized = task.raw / it->second;
    score.category = task.category;
    report.scores.push_back(score);
    by_category[task.category].push_back(score.normalized);
  }
  for (auto& [category, values] : by_category) {
    std::sort(values.begin(), values.end());
    CategoryStats stats;
    stats.category = category;
    stats.count = values.size();
    stats.median = quantile(values, 0.5);
    stats.q1 = quantile(values, 0.25);
    stats.q3 = quantile(values, 0.75);
    stats.min = values.front();
    stats.max = values.back();
    report.categories.push_back(stats);
  }
  return report;
}

std::string score_report_to_json(const ScoreReport& report) {
  json scores = json::array();
  for (const auto& s : report.scores)
    scores.push_back({{"task", s.task},
                      {"raw", s.raw},
                      {"reference_max", s.reference_max},
                      {"normalized", s.normalized},
                      {"category", s.category}});
  json cats = json::array();
  for (const auto& c : report.categories)
    cats.push_back({{"category", c.category},
                    {"count", c.count},
                    {"median", c.median},
                    {"q1", c.q1},
                    {"q3", c.q3},
                    {"min", c.min},
                    {"max", c.max}});
  return json{{"scores", scores}, {"categories", cats}}.dump(2);
}

std::string score_report_to_csv(const ScoreReport& report) {
  std::ostringstream os;
  os << "task,category,raw,reference_max,normalized\n";
  for (const auto& s : report.scores)
    os << s.task << ',' << s.category << ',' << s.raw << ',' << s.reference_max
       << ',' << s.normalized << '\n';
  return os.str();
}

std::string category_stats_to_csv(const ScoreReport& report) {
  std::ostringstream os;
  os << "category,count,median,q1,q3,min,max\n";
  for (const auto& c : report.categories)
    os << c.category << ',' << c.count << ',' << c.median << ',' << c.q1 << ','
       << c.q3 << ',' << c.min << ',' << c.max << '\n';
  return os.str();
}

}  // namespace passt
