#ifndef ECMOE_REPORT_HPP
#define ECMOE_REPORT_HPP

#include <string>

#include <json.hpp>

#include "ecmoe/train.hpp"

namespace ecmoe {

using ordered_json = nlohmann::ordered_json;

ordered_json config_json(const RunConfig& c);
RunConfig config_from_json(const nlohmann::json& j);

ordered_json synthetic_json(const SyntheticSpec& s);
SyntheticSpec synthetic_from_json(const nlohmann::json& j);

ordered_json stats_json(const LoadStats& st);
ordered_json residuals_json(const Residuals& r);

// Full run report. with_timestamp also controls the wall-clock section so
// that reports are byte-identical across runs when it is off.
ordered_json report_json(const RunReport& r, bool with_timestamp);

void write_text_file(const std::string& path, const std::string& content);
void write_csv_load(const std::string& path, const LoadStats& st);
void write_csv_hist(const std::string& path, const LoadStats& st);

}  // namespace ecmoe

#endif
