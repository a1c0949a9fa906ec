// SPDX-License-Identifier: Apache-2.0
#include "retain/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "retain/errors.hpp"

namespace retain {

namespace {

using ojson = nlohmann::ordered_json;

ojson config_json(const ModelConfig& c) {
  ojson j;
  j["model_kind"] = to_string(c.kind);
  j["dims"] = {{"r", c.dims.r}, {"m", c.dims.m}, {"p", c.dims.p}, {"q", c.dims.q}, {"s", c.dims.s}};
  j["task"] = to_string(c.task);
  j["timestamped"] = c.kind == ModelKind::kRetainTs;
  j["output"] = to_string(c.output);
  j["baseline_hidden"] = c.baseline_hidden;
  j["window"] = c.window;
  j["dropout"] = {{"embedding", c.dropout.embedding}, {"context", c.dropout.context}, {"hidden", c.dropout.hidden}};
  j["init_seed"] = c.init_seed;
  return j;
}

ModelConfig config_from(const ojson& j) {
  try {
    ModelConfig c;
    c.kind = parse_model_kind(j.at("model_kind").get<std::string>());
    const auto& d = j.at("dims");
    c.dims = {d.at("r").get<std::size_t>(), d.at("m").get<std::size_t>(), d.at("p").get<std::size_t>(),
              d.at("q").get<std::size_t>(), d.at("s").get<std::size_t>()};
    c.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("timestamped") && j.at("timestamped").get<bool>() != (c.kind == ModelKind::kRetainTs)) {
      throw ParseError("timestamped flag disagrees with model_kind");
    }
    c.output = j.contains("output") ? parse_output_mode(j.at("output").get<std::string>()) : default_output(c.task);
    c.baseline_hidden = j.value("baseline_hidden", c.baseline_hidden);
    c.window = j.value("window", c.window);
    c.dropout = default_dropout(c.kind);
    if (j.contains("dropout")) {
      const auto& r = j.at("dropout");
      c.dropout = {r.at("embedding").get<double>(), r.at("context").get<double>(), r.at("hidden").get<double>()};
    }
    c.init_seed = j.value("init_seed", c.init_seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
}

ojson tensor_json(const Tensor& t) {
  if (t.rank() == 1) return ojson(t.values());
  ojson rows = ojson::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    ojson row = ojson::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void fill_tensor(Tensor& t, const ojson& j, const std::string& name) {
  std::vector<double> flat;
  if (t.rank() == 1) {
    flat = j.get<std::vector<double>>();
  } else {
    if (!j.is_array() || j.size() != t.rows()) throw ParseError("param " + name + ": wrong row count");
    for (const auto& row : j) {
      const auto values = row.get<std::vector<double>>();
      if (values.size() != t.cols()) throw ParseError("param " + name + ": wrong column count");
      flat.insert(flat.end(), values.begin(), values.end());
    }
  }
  if (flat.size() != t.size()) throw ParseError("param " + name + ": expected " + shape_string(t.shape()));
  std::copy(flat.begin(), flat.end(), t.data());
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return config_from(ojson::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
}

std::string checkpoint_to_json(const SequenceModel& model) {
  ojson j;
  j["format_version"] = kCheckpointFormatVersion;
  const ojson config = config_json(model.config());
  for (const auto& [key, value] : config.items()) j[key] = value;
  ojson params;
  const auto& ps = model.params();
  for (auto id : ps.ids()) params[ps.name(id)] = tensor_json(ps[id]);
  j["params"] = std::move(params);
  return j.dump(1);
}

std::unique_ptr<SequenceModel> checkpoint_from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw ParseError("checkpoint: unsupported format_version " + j.at("format_version").dump());
    }
    auto model = make_model(config_from(j));
    const auto& params = j.at("params");
    auto& ps = model->params();
    if (params.size() != ps.size()) {
      throw ParseError("checkpoint: expected " + std::to_string(ps.size()) + " params, found " +
                       std::to_string(params.size()));
    }
    for (auto id : ps.ids()) {
      const auto& name = ps.name(id);
      if (!params.contains(name)) throw ParseError("checkpoint: missing param " + name);
      fill_tensor(ps[id], params.at(name), name);
    }
    if (!ps.all_finite()) throw ParseError("checkpoint: non-finite parameter");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const SequenceModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << checkpoint_to_json(model) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::unique_ptr<SequenceModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace retain
