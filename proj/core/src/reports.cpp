#include "vdtlab/reports.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vdtlab/errors.hpp"

namespace vdtlab {

namespace {

using nlohmann::json;

// Infinite metrics (psnr at zero error, norm ratios over zero) keep a string
// sentinel because JSON has no infinity literal.
json json_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

json layer_set_json(const std::set<int>& layers) {
  json a = json::array();
  for (int l : layers) a.push_back(l);
  return a;
}

}  // namespace

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_layer_set(const std::set<int>& layers) {
  if (layers.empty()) return "all";
  std::string out;
  for (int l : layers) {
    if (!out.empty()) out += ";";
    out += std::to_string(l);
  }
  return out;
}

std::string sparsity_csv(const std::vector<DegradationReport>& reports) {
  std::string out = "k,included_layers,excluded_layers,layer,mse,psnr,realized_fraction\n";
  for (const DegradationReport& r : reports) {
    out += format_double(r.k) + "," + format_layer_set(r.included_layers) + "," +
           (r.excluded_layers.empty() ? "none" : format_layer_set(r.excluded_layers)) +
           "," + (r.layer >= 0 ? std::to_string(r.layer) : "") + "," +
           format_double(r.mse) + "," + format_double(r.psnr) + "," +
           format_double(r.mean_source_fraction) + "\n";
  }
  return out;
}

std::string temperature_csv(const std::vector<TemperaturePoint>& points) {
  std::string out = "temperature,mean_entropy,mse,psnr\n";
  for (const TemperaturePoint& p : points)
    out += format_double(p.temperature) + "," + format_double(p.mean_entropy) + "," +
           format_double(p.mse) + "," + format_double(p.psnr) + "\n";
  return out;
}

std::string transfer_csv(const std::vector<LayerTransferPoint>& points) {
  std::string out = "layer,mse_to_source,mse_to_target_baseline\n";
  for (const LayerTransferPoint& p : points)
    out += std::to_string(p.layer) + "," + format_double(p.mse_to_source) + "," +
           format_double(p.mse_to_target_baseline) + "\n";
  return out;
}

std::string loss_csv(const std::vector<double>& loss_trace,
                     const std::vector<double>& lr_trace) {
  if (loss_trace.size() != lr_trace.size())
    throw ContractError("loss and lr traces differ in length");
  std::string out = "step,loss,lr\n";
  for (std::size_t i = 0; i < loss_trace.size(); ++i)
    out += std::to_string(i) + "," + format_double(loss_trace[i]) + "," +
           format_double(lr_trace[i]) + "\n";
  return out;
}

std::string sink_frequency_csv(const SinkReport& report) {
  std::string out = "layer,head";
  for (int s = 0; s < report.steps; ++s) out += ",step_" + std::to_string(s);
  out += "\n";
  for (int l = 0; l < report.layers; ++l)
    for (int h = 0; h < report.heads; ++h) {
      out += std::to_string(l) + "," + std::to_string(h);
      for (int s = 0; s < report.steps; ++s)
        out += "," + format_double(report.frequency(l * report.heads + h, s));
      out += "\n";
    }
  return out;
}

std::string sparsity_json(const std::vector<DegradationReport>& reports) {
  json arr = json::array();
  for (const DegradationReport& r : reports) {
    json o;
    o["k"] = r.k;
    o["included_layers"] = layer_set_json(r.included_layers);
    o["excluded_layers"] = layer_set_json(r.excluded_layers);
    if (r.layer >= 0) o["layer"] = r.layer;
    o["mse"] = r.mse;
    o["psnr"] = json_metric(r.psnr);
    o["realized_fraction"] = r.mean_source_fraction;
    o["applied_fraction"] = r.mean_applied_fraction;
    o["removed_mass"] = r.mean_removed_mass;
    o["sites"] = r.sites.size();
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

std::string temperature_json(const std::vector<TemperaturePoint>& points) {
  json arr = json::array();
  for (const TemperaturePoint& p : points) {
    json o;
    o["temperature"] = p.temperature;
    o["mean_entropy"] = p.mean_entropy;
    o["mse"] = p.mse;
    o["psnr"] = json_metric(p.psnr);
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

std::string transfer_json(const std::vector<LayerTransferPoint>& points) {
  json arr = json::array();
  for (const LayerTransferPoint& p : points) {
    json o;
    o["layer"] = p.layer;
    o["mse_to_source"] = p.mse_to_source;
    o["mse_to_target_baseline"] = p.mse_to_target_baseline;
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

std::string sink_report_json(const SinkReport& report) {
  json o;
  o["layers"] = report.layers;
  o["heads"] = report.heads;
  o["steps"] = report.steps;
  o["prompts"] = report.prompts;
  o["total_flags"] = report.total_flags();
  o["text_sink_count"] = report.text_sink_count;
  o["head_frequency"] = report.head_frequency;
  json flags = json::array();
  for (const SinkFlagRecord& f : report.flags) {
    json fo;
    fo["prompt"] = f.prompt;
    fo["layer"] = f.layer;
    fo["head"] = f.head;
    fo["step"] = f.step;
    fo["position"] = f.position;
    flags.push_back(std::move(fo));
  }
  o["flags"] = std::move(flags);
  o["spatial"] = report.spatial;
  o["temporal"] = report.temporal;
  json norms = json::array();
  for (const SinkStepNorms& n : report.value_norms) {
    json no;
    no["step"] = n.step;
    no["sink_norm"] = n.sink_norm;
    no["other_norm"] = n.other_norm;
    no["ratio"] = json_metric(n.ratio);
    norms.push_back(std::move(no));
  }
  o["value_norms"] = std::move(norms);
  return o.dump(2) + "\n";
}

std::string skip_heads_json(const SkipHeadsResult& result, const std::string& mode) {
  json o;
  o["mode"] = mode;
  o["mse"] = result.mse;
  o["psnr"] = json_metric(result.psnr);
  o["skipped_fraction"] = result.skipped_fraction;
  json sinks = json::array();
  for (const auto& [l, h] : result.sink_heads) sinks.push_back({{"layer", l}, {"head", h}});
  o["sink_heads"] = std::move(sinks);
  json skipped = json::array();
  for (const auto& [l, h] : result.skipped_heads)
    skipped.push_back({{"layer", l}, {"head", h}});
  o["skipped_heads"] = std::move(skipped);
  return o.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace vdtlab
