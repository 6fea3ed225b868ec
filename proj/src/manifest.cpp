#include "passt/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

namespace passt {

using nlohmann::json;

const char* task_type_name(TaskType t) {
  switch (t) {
    case TaskType::SceneMulticlass: return "scene-multiclass";
    case TaskType::SceneMultilabel: return "scene-multilabel";
    case TaskType::TimestampEvent: return "timestamp-event";
  }
  return "?";
}

TaskType task_type_from_name(const std::string& name) {
  if (name == "scene-multiclass") return TaskType::SceneMulticlass;
  if (name == "scene-multilabel") return TaskType::SceneMultilabel;
  if (name == "timestamp-event") return TaskType::TimestampEvent;
  throw Error("format", "unknown task type: " + name);
}

const char* metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::Accuracy: return "accuracy";
    case MetricKind::MeanAveragePrecision: return "mAP";
    case MetricKind::OnsetF1: return "onset_f1";
  }
  return "?";
}

MetricKind metric_from_name(const std::string& name) {
  if (name == "accuracy") return MetricKind::Accuracy;
  if (name == "mAP") return MetricKind::MeanAveragePrecision;
  if (name == "onset_f1") return MetricKind::OnsetF1;
  throw Error("format", "unknown metric: " + name);
}

const std::vector<ClipEntry>& TaskManifest::split(const std::string& n) const {
  if (n == "train") return train;
  if (n == "valid") return valid;
  if (n == "test") return test;
  throw Error("usage", "unknown split: " + n);
}

size_t TaskManifest::label_index(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end())
    throw Error("format", "label '" + label + "' not in vocabulary of task " + name);
  return static_cast<size_t>(it - labels.begin());
}

void TaskManifest::validate() const {
  if (category != "speech" && category != "music" && category != "general")
    throw Error("format", "category must be speech|music|general, got " + category);
  std::set<std::string> seen;
  for (const auto* split : {&train, &valid, &test}) {
    for (const auto& clip : *split) {
      if (!seen.insert(clip.file).second)
        throw Error("format", "clip appears in more than one split: " + clip.file);
      if (task_type == TaskType::SceneMulticlass) label_index(clip.label);
      for (const auto& l : clip.labels) label_index(l);
      for (const auto& e : clip.events) label_index(e.label);
    }
  }
}

namespace {

json clip_to_json(const ClipEntry& c, TaskType type) {
  json j{{"file", c.file}};
  switch (type) {
    case TaskType::SceneMulticlass: j["label"] = c.label; break;
    case TaskType::SceneMultilabel: j["labels"] = c.labels; break;
    case TaskType::TimestampEvent: {
      json events = json::array();
      for (const auto& e : c.events)
        events.push_back({{"onset_ms", e.onset_ms},
                          {"offset_ms", e.offset_ms},
                          {"label", e.label}});
      j["events"] = events;
      break;
    }
  }
  return j;
}

ClipEntry clip_from_json(const json& j, TaskType type) {
  ClipEntry c;
  c.file = j.at("file").get<std::string>();
  switch (type) {
    case TaskType::SceneMulticlass:
      c.label = j.at("label").get<std::string>();
      break;
    case TaskType::SceneMultilabel:
      c.labels = j.at("labels").get<std::vector<std::string>>();
      break;
    case TaskType::TimestampEvent:
      for (const auto& e : j.at("events")) {
        c.events.push_back({e.at("onset_ms").get<double>(),
                            e.at("offset_ms").get<double>(),
                            e.at("label").get<std::string>()});
      }
      break;
  }
  return c;
}

}  // namespace

TaskManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("format", path + ": invalid JSON: " + e.what());
  }
  TaskManifest m;
  m.name = j.at("name").get<std::string>();
  m.task_type = task_type_from_name(j.at("task_type").get<std::string>());
  m.category = j.at("category").get<std::string>();
  m.metric = metric_from_name(j.at("metric").get<std::string>());
  m.labels = j.at("labels").get<std::vector<std::string>>();
  for (const auto& [split_name, vec] :
       {std::pair{"train", &m.train}, {"valid", &m.valid}, {"test", &m.test}}) {
    for (const auto& cj : j.at("splits").at(split_name))
      vec->push_back(clip_from_json(cj, m.task_type));
  }
  m.validate();
  return m;
}

void save_manifest(const TaskManifest& m, const std::string& path) {
  m.validate();
  json splits;
  for (const auto& [split_name, vec] :
       {std::pair{"train", &m.train}, {"valid", &m.valid}, {"test", &m.test}}) {
    json arr = json::array();
    for (const auto& c : *vec) arr.push_back(clip_to_json(c, m.task_type));
    splits[split_name] = arr;
  }
  json j{{"name", m.name},
         {"task_type", task_type_name(m.task_type)},
         {"category", m.category},
         {"metric", metric_name(m.metric)},
         {"labels", m.labels},
         {"splits", splits}};
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace passt
