#pragma once

#include <set>
#include <string>
#include <vector>

#include "vdtlab/sink_lab.hpp"
#include "vdtlab/sparsity_lab.hpp"
#include "vdtlab/transfer_lab.hpp"

namespace vdtlab {

// Shortest decimal that round-trips; infinities become "inf" / "-inf".
std::string format_double(double v);

// "all" for an empty set, else semicolon-joined ascending indices.
std::string format_layer_set(const std::set<int>& layers);

// Columns: k,included_layers,excluded_layers,layer,mse,psnr,realized_fraction.
// realized_fraction is the threshold-source fraction; the layer column is
// empty except for single-layer sensitivity rows.
std::string sparsity_csv(const std::vector<DegradationReport>& reports);

// Columns: temperature,mean_entropy,mse,psnr.
std::string temperature_csv(const std::vector<TemperaturePoint>& points);

// Columns: layer,mse_to_source,mse_to_target_baseline.
std::string transfer_csv(const std::vector<LayerTransferPoint>& points);

// Columns: step,loss,lr.
std::string loss_csv(const std::vector<double>& loss_trace,
                     const std::vector<double>& lr_trace);

// One row per (layer, head); step columns mirror the frequency matrix.
std::string sink_frequency_csv(const SinkReport& report);

std::string sparsity_json(const std::vector<DegradationReport>& reports);
std::string temperature_json(const std::vector<TemperaturePoint>& points);
std::string transfer_json(const std::vector<LayerTransferPoint>& points);
std::string sink_report_json(const SinkReport& report);
std::string skip_heads_json(const SkipHeadsResult& result, const std::string& mode);

// Whole-file write; IoError on failure.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace vdtlab
