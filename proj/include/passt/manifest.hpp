#pragma once

#include <string>
#include <vector>

#include "passt/common.hpp"

namespace passt {

enum class TaskType { SceneMulticlass, SceneMultilabel, TimestampEvent };
enum class MetricKind { Accuracy, MeanAveragePrecision, OnsetF1 };

struct EventLabel {
  double onset_ms = 0.0;
  double offset_ms = 0.0;
  std::string label;
};

struct ClipEntry {
  std::string file;                 // audio path relative to the manifest
  std::string label;                // scene-multiclass
  std::vector<std::string> labels;  // scene-multilabel
  std::vector<EventLabel> events;   // timestamp-event
};

// Dataset description: layout is <root>/audio/*.wav + labels in the manifest
// itself. Categories follow the three evaluation buckets.
struct TaskManifest {
  std::string name;
  TaskType task_type = TaskType::SceneMulticlass;
  std::string category;  // "speech" | "music" | "general"
  MetricKind metric = MetricKind::Accuracy;
  std::vector<std::string> labels;  // vocabulary
  std::vector<ClipEntry> train, valid, test;

  const std::vector<ClipEntry>& split(const std::string& name) const;
  size_t label_index(const std::string& label) const;
  // splits disjoint, labels in vocabulary, category valid
  void validate() const;
};

TaskManifest load_manifest(const std::string& path);
void save_manifest(const TaskManifest& manifest, const std::string& path);

const char* task_type_name(TaskType t);
TaskType task_type_from_name(const std::string& name);
const char* metric_name(MetricKind m);
MetricKind metric_from_name(const std::string& name);

}  // namespace passt
