#include "echomil/dataset.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <random>
#include <sstream>

#include "echomil/errors.hpp"
#include "echomil/seed.hpp"

namespace echomil {

namespace fs = std::filesystem;
using nlohmann::json;

ClassCounts DatasetManifest::class_counts() const {
  ClassCounts counts;
  for (const auto& e : entries) {
    (e.label == Label::positive ? counts.positive : counts.negative) += 1;
  }
  return counts;
}

const ManifestEntry& DatasetManifest::find(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e;
  }
  throw ArgumentError("id '" + id + "' is not in the manifest");
}

fs::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  const fs::path p(entry.path);
  return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest DatasetManifest::subset(const std::set<std::string>& ids) const {
  DatasetManifest out;
  out.base_dir = base_dir;
  for (const auto& e : entries) {
    if (ids.count(e.id)) out.entries.push_back(e);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line) != "id,path,label,view") {
    throw ArgumentError("manifest '" + path.string() + "' must start with header id,path,label,view");
  }
  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  std::set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw ArgumentError("manifest line " + std::to_string(line_no) + ": expected 4 fields");
    }
    ManifestEntry e;
    e.id = trim(fields[0]);
    e.path = trim(fields[1]);
    const std::string label = trim(fields[2]);
    if (label == "1") {
      e.label = Label::positive;
    } else if (label == "-1") {
      e.label = Label::negative;
    } else {
      throw ArgumentError("manifest line " + std::to_string(line_no) + ": label must be -1 or 1");
    }
    e.view = view_from_string(trim(fields[3]));
    if (e.id.empty()) throw ArgumentError("manifest line " + std::to_string(line_no) + ": empty id");
    if (!seen.insert(e.id).second) throw ArgumentError("duplicate sample id '" + e.id + "'");
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << "id,path,label,view\n";
  for (const auto& e : manifest.entries) {
    out << e.id << ',' << e.path << ',' << to_int(e.label) << ',' << to_string(e.view) << '\n';
  }
  if (!out) throw IoError("failed writing manifest '" + path.string() + "'");
}

std::vector<SamplePtr> load_dataset(const DatasetManifest& manifest, int workers) {
  const auto load_one = [&manifest](std::size_t i) {
    const auto& e = manifest.entries[i];
    return std::make_shared<const VideoSample>(
        load_video(manifest.resolve(e), e.id, e.label, e.view));
  };
  std::vector<SamplePtr> samples(manifest.entries.size());
  workers = std::max(1, workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = load_one(i);
    return samples;
  }
  std::vector<std::future<void>> jobs;
  for (int w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < samples.size(); i += workers) samples[i] = load_one(i);
    }));
  }
  for (auto& j : jobs) j.get();
  return samples;
}

// ----------------------------------------------------------------- folds

std::vector<std::string> FoldSplit::fold_ids(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : assignments) {
    if (f == fold) ids.push_back(id);
  }
  return ids;
}

std::set<std::string> FoldSplit::ids_outside(int fold) const {
  std::set<std::string> ids;
  for (const auto& [id, f] : assignments) {
    if (f != fold) ids.insert(id);
  }
  return ids;
}

FoldSplit make_fold_splits(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("fold count must be at least 2");
  std::vector<std::string> negatives;
  std::vector<std::string> positives;
  for (const auto& e : manifest.entries) {
    (e.label == Label::positive ? positives : negatives).push_back(e.id);
  }
  if (static_cast<int>(negatives.size()) < k || static_cast<int>(positives.size()) < k) {
    throw StratificationError("each class needs at least " + std::to_string(k) +
                              " samples for " + std::to_string(k) + "-fold stratification (have " +
                              std::to_string(positives.size()) + " positive, " +
                              std::to_string(negatives.size()) + " negative)");
  }
  FoldSplit split;
  split.k = k;
  split.seed = seed;
  int start = 0;
  for (auto* ids : {&negatives, &positives}) {
    std::sort(ids->begin(), ids->end());
    std::mt19937_64 rng(mix_seed(seed, ids == &positives ? 1 : 0));
    std::shuffle(ids->begin(), ids->end(), rng);
    for (std::size_t i = 0; i < ids->size(); ++i) {
      split.assignments[(*ids)[i]] = static_cast<int>((start + i) % k);
    }
    start = static_cast<int>(ids->size() % k);
  }
  return split;
}

void validate_fold_split(const FoldSplit& split, const DatasetManifest& manifest) {
  if (split.k < 2) throw ArgumentError("fold split has k < 2");
  if (split.assignments.size() != manifest.entries.size()) {
    throw ArgumentError("fold split covers " + std::to_string(split.assignments.size()) +
                        " ids but the manifest has " + std::to_string(manifest.entries.size()));
  }
  std::vector<int> pos(split.k, 0), neg(split.k, 0);
  for (const auto& e : manifest.entries) {
    const auto it = split.assignments.find(e.id);
    if (it == split.assignments.end()) {
      throw ArgumentError("id '" + e.id + "' has no fold assignment");
    }
    if (it->second < 0 || it->second >= split.k) {
      throw ArgumentError("id '" + e.id + "' assigned to fold outside [0, k)");
    }
    (e.label == Label::positive ? pos : neg)[it->second] += 1;
  }
  const auto counts = manifest.class_counts();
  const auto check = [&](const std::vector<int>& per_fold, int total, const char* name) {
    const double ideal = static_cast<double>(total) / split.k;
    for (int f = 0; f < split.k; ++f) {
      if (std::abs(per_fold[f] - ideal) > 1.0) {
        throw ArgumentError(std::string("fold ") + std::to_string(f) + " is not stratified for " +
                            name + " samples");
      }
    }
  };
  check(pos, counts.positive, "positive");
  check(neg, counts.negative, "negative");
}

void check_disjoint(const std::vector<std::string>& train_ids,
                    const std::vector<std::string>& val_ids) {
  const std::set<std::string> train(train_ids.begin(), train_ids.end());
  for (const auto& id : val_ids) {
    if (train.count(id)) {
      throw LeakageError("sample '" + id + "' appears in both training and validation sets");
    }
  }
}

void write_fold_split(const FoldSplit& split, const fs::path& path) {
  json j;
  j["k"] = split.k;
  j["seed"] = split.seed;
  j["assignments"] = split.assignments;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

FoldSplit read_fold_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    const json j = json::parse(in);
    FoldSplit split;
    split.k = j.at("k").get<int>();
    split.seed = j.value("seed", std::uint64_t{0});
    split.assignments = j.at("assignments").get<std::map<std::string, int>>();
    return split;
  } catch (const json::exception& e) {
    throw ArgumentError("malformed fold split '" + path.string() + "': " + e.what());
  }
}

}  // namespace echomil
