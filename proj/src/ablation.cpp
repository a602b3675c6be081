#include "echomil/ablation.hpp"

#include <spdlog/spdlog.h>

#include <map>
#include <sstream>
#include <tuple>

#include "echomil/config.hpp"

namespace echomil {

using nlohmann::json;

namespace {

using Switches = std::tuple<bool, bool, bool, bool>;  // temporal, attention, mad, brs

const char* mark(bool on) { return on ? "✓" : "✗"; }

}  // namespace

AblationReport run_ablation_grid(const std::vector<SamplePtr>& samples, const FoldSplit& split,
                                 const ModelConfig& base_model, const TrainConfig& base_train,
                                 const CVOptions& options) {
  std::map<Switches, AblationRow> cache;
  const auto run = [&](bool temporal, bool attention, bool mad, bool brs) {
    const Switches key{temporal, attention, mad, brs};
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    AblationRow row;
    row.model_config = base_model;
    row.model_config.use_temporal = temporal;
    row.model_config.use_attention = attention;
    row.model_config.use_mad = mad;
    row.train_config = base_train;
    row.train_config.use_brs = brs;
    spdlog::info("ablation: 3D={} AAM={} MAD={} BRS={}", temporal, attention, mad, brs);
    row.report = run_cross_validation(samples, split, row.model_config, row.train_config, options);
    row.accuracy = row.report.aggregate.at("accuracy");
    cache.emplace(key, row);
    return row;
  };

  AblationReport out;
  out.fusion_attention = {"3D fusion and attention aggregation (MAD and BRS off)", "3D",
                          "AAM", {}};
  out.mad_brs = {"Maximal agreement decision and block random selection (3D and AAM on)", "MAD",
                 "BRS", {}};
  for (bool a : {false, true}) {
    for (bool b : {false, true}) {
      AblationRow row = run(a, b, false, false);
      row.first = a;
      row.second = b;
      out.fusion_attention.rows.push_back(std::move(row));
    }
  }
  for (bool a : {false, true}) {
    for (bool b : {false, true}) {
      AblationRow row = run(true, true, a, b);
      row.first = a;
      row.second = b;
      out.mad_brs.rows.push_back(std::move(row));
    }
  }
  return out;
}

std::string render_ablation_table(const AblationTable& table) {
  std::ostringstream s;
  s << table.title << '\n';
  s << pad(table.first_name, 6) << pad(table.second_name, 6) << "Accuracy(%)\n";
  for (const auto& row : table.rows) {
    s << pad(mark(row.first), 6) << pad(mark(row.second), 6) << format_mean_std(row.accuracy)
      << '\n';
  }
  return s.str();
}

std::string render_ablation(const AblationReport& report) {
  return render_ablation_table(report.fusion_attention) + "\n" +
         render_ablation_table(report.mad_brs) +
         "\nmean±std of per-fold accuracy; std is the population standard deviation\n";
}

json to_json(const AblationReport& report) {
  const auto table_json = [](const AblationTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) {
      rows.push_back({{t.first_name, r.first},
                      {t.second_name, r.second},
                      {"accuracy", to_json(r.accuracy)},
                      {"model", to_json(r.model_config)},
                      {"train", to_json(r.train_config)},
                      {"cv", to_json(r.report)}});
    }
    return json{{"title", t.title}, {"rows", std::move(rows)}};
  };
  return json{{"fusion_attention", table_json(report.fusion_attention)},
              {"mad_brs", table_json(report.mad_brs)}};
}

}  // namespace echomil
