#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "metalora/harness.hpp"

namespace metalora {

using Json = nlohmann::json;

// Matrices serialize as {"rows": r, "cols": c, "data": [row-major doubles]}.
Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const RngSpec& s);
RngSpec rng_spec_from_json(const Json& j);

Json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const Json& j);

Json to_json(const TaskDataset& data);
TaskDataset task_dataset_from_json(const Json& j);

Json to_json(const MetaParams& p);
MetaParams meta_params_from_json(const Json& j);

Json to_json(const Adapter& a);
Adapter adapter_from_json(const Json& j);

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const Json& j);

Json to_json(const AblationRow& r);

// Histories are summarized (first/last values and length); everything else
// round-trips.
Json to_json(const TrainTrace& t);

Json to_json(const StationaryReport& r);
Json to_json(const NetCertificate& c);
Json to_json(const CheckResult& c);
Json to_json(const VerifyReport& r);

// %.17g, enough digits to round-trip a double exactly.
std::string format_g17(double x);

// Header: sweep_axis,sweep_value,method,trial,retrain_loss,test_loss,seed,converged
std::string ablation_csv(const std::vector<AblationRow>& rows);

// Median line per method with an interquartile band, log-scale y. Static SVG.
std::string sweep_plot_svg(const std::vector<AblationRow>& rows, const std::string& axis);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
Json load_json_file(const std::string& path);

}  // namespace metalora
