#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "echomil/training.hpp"

namespace echomil {

struct AblationRow {
  bool first = false;   // 3D fusion, or MAD
  bool second = false;  // attention pooling, or BRS
  ModelConfig model_config;
  TrainConfig train_config;
  CVReport report;
  MeanStd accuracy;
};

struct AblationTable {
  std::string title;
  std::string first_name;
  std::string second_name;
  std::vector<AblationRow> rows;  // (off, off), (off, on), (on, off), (on, on)
};

struct AblationReport {
  AblationTable fusion_attention;  // MAD and BRS off
  AblationTable mad_brs;           // 3D fusion and attention on
};

/// Cross-validates the two 2x2 switch grids. The configuration shared by
/// both tables (everything on but MAD and BRS) is trained once.
AblationReport run_ablation_grid(const std::vector<SamplePtr>& samples, const FoldSplit& split,
                                 const ModelConfig& base_model, const TrainConfig& base_train,
                                 const CVOptions& options = {});

std::string render_ablation_table(const AblationTable& table);
std::string render_ablation(const AblationReport& report);
nlohmann::json to_json(const AblationReport& report);

}  // namespace echomil
