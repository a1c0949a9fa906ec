// SPDX-License-Identifier: Apache-2.0
#include "retain/interpret.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "retain/errors.hpp"
#include "retain/nn.hpp"

namespace retain::interpret {

namespace {

void check_trace(const ForwardTrace& trace, const RetainModel& model) {
  if (trace.training) throw StateError("decomposition requires a trace computed with dropout off");
  const auto& d = model.dims();
  if (trace.step == 0 || trace.attention.alphas.size() != trace.step || trace.attention.betas.size() != trace.step) {
    throw DimensionError("trace attention does not cover step " + std::to_string(trace.step));
  }
  for (const auto& b : trace.attention.betas) {
    if (b.size() != d.m) throw DimensionError("trace beta length " + std::to_string(b.size()));
  }
}

void coefficient_into(const ForwardTrace& trace, const Tensor& W_emb, const Tensor& W_out, std::size_t j, int code,
                      std::vector<double>& out) {
  if (code < 0 || static_cast<std::size_t>(code) >= W_emb.cols()) {
    throw DimensionError("code " + std::to_string(code) + " outside vocabulary of " + std::to_string(W_emb.cols()));
  }
  const auto k = static_cast<std::size_t>(code);
  const double alpha = trace.attention.alphas[j];
  const auto& beta = trace.attention.betas[j];
  out.assign(W_out.rows(), 0.0);
  for (std::size_t d = 0; d < W_out.rows(); ++d) {
    double acc = 0.0;
    for (std::size_t m = 0; m < W_out.cols(); ++m) acc += W_out.at(d, m) * beta[m] * W_emb.at(m, k);
    out[d] = alpha * acc;
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

template <typename T>
T parse_integer(const std::string& s, std::size_t line) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<double> coefficient(const ForwardTrace& trace, const RetainModel& model, std::size_t visit, int code) {
  check_trace(trace, model);
  if (visit >= trace.step) throw ArgumentError("visit " + std::to_string(visit) + " after prediction step");
  std::vector<double> out;
  coefficient_into(trace, model.params().at("W_emb"), model.params().at("W_out"), visit, code, out);
  return out;
}

std::vector<std::vector<std::vector<double>>> contribution_coefficients(const ForwardTrace& trace,
                                                                        const RetainModel& model) {
  check_trace(trace, model);
  const Tensor& W_emb = model.params().at("W_emb");
  const Tensor& W_out = model.params().at("W_out");
  std::vector<std::vector<std::vector<double>>> out(trace.step);
  for (std::size_t j = 0; j < trace.step; ++j) {
    out[j].resize(W_emb.cols());
    for (std::size_t k = 0; k < W_emb.cols(); ++k) coefficient_into(trace, W_emb, W_out, j, static_cast<int>(k), out[j][k]);
  }
  return out;
}

ContributionMatrix contributions(const ForwardTrace& trace, const RetainModel& model,
                                 const data::PatientRecord& record) {
  check_trace(trace, model);
  if (record.visits.size() < trace.step) {
    throw ArgumentError("record " + std::to_string(record.patient_id) + " is shorter than the trace");
  }
  const Tensor& W_emb = model.params().at("W_emb");
  const Tensor& W_out = model.params().at("W_out");
  ContributionMatrix cm;
  cm.prediction_step = trace.step;
  cm.output = trace.output;
  cm.bias = model.params().at("b_out").values();
  cm.expected = trace.y_hat;
  std::vector<double> coef;
  for (std::size_t j = 0; j < trace.step; ++j) {
    const auto& visit = record.visits[j];
    for (std::size_t i = 0; i < visit.codes.size(); ++i) {
      const double x = visit.value(i);
      if (x == 0.0) continue;
      coefficient_into(trace, W_emb, W_out, j, visit.codes[i], coef);
      Contribution c;
      c.visit = j;
      c.code = visit.codes[i];
      c.input = x;
      c.omega.resize(coef.size());
      for (std::size_t d = 0; d < coef.size(); ++d) c.omega[d] = coef[d] * x;
      cm.entries.push_back(std::move(c));
    }
  }
  return cm;
}

std::vector<double> reconstruct_unchecked(const ContributionMatrix& cm) {
  std::vector<double> logits = cm.bias;
  for (const auto& e : cm.entries) {
    if (e.omega.size() != logits.size()) throw DimensionError("contribution width mismatch");
    for (std::size_t d = 0; d < logits.size(); ++d) logits[d] += e.omega[d];
  }
  return cm.output == OutputMode::kSigmoid ? nn::sigmoid(logits) : nn::softmax(logits);
}

double reconstruction_error(const ContributionMatrix& cm) {
  const auto y = reconstruct_unchecked(cm);
  if (y.size() != cm.expected.size()) throw DimensionError("expected output width mismatch");
  double worst = 0.0;
  for (std::size_t d = 0; d < y.size(); ++d) worst = std::max(worst, std::abs(y[d] - cm.expected[d]));
  return worst;
}

std::vector<double> reconstruct_prediction(const ContributionMatrix& cm, double tolerance) {
  const auto y = reconstruct_unchecked(cm);
  if (cm.expected.empty()) return y;
  if (y.size() != cm.expected.size()) throw DimensionError("expected output width mismatch");
  double worst = 0.0;
  for (std::size_t d = 0; d < y.size(); ++d) worst = std::max(worst, std::abs(y[d] - cm.expected[d]));
  if (!(worst <= tolerance)) {
    std::ostringstream msg;
    msg << "reconstruction differs from the model output by " << worst << " at step " << cm.prediction_step;
    throw IntegrityError(msg.str());
  }
  return y;
}

std::vector<RankedContribution> top_contributors(const ContributionMatrix& cm, std::size_t label, std::size_t n) {
  if (n == 0) return {};
  if (label >= cm.bias.size()) throw ArgumentError("label index " + std::to_string(label) + " out of range");
  std::vector<RankedContribution> all;
  all.reserve(cm.entries.size());
  for (const auto& e : cm.entries) all.push_back({e.visit, e.code, e.omega.at(label)});
  std::sort(all.begin(), all.end(), [](const RankedContribution& a, const RankedContribution& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.visit != b.visit) return a.visit < b.visit;
    return a.code < b.code;
  });
  if (all.size() > n) all.resize(n);
  return all;
}

void export_contribution_timeline(const ContributionMatrix& cm, const data::PatientRecord& record,
                                  const data::Vocabulary& vocab, std::ostream& out) {
  out << "visit_index,day_offset,code_name,code_index";
  for (std::size_t d = 0; d < cm.bias.size(); ++d) out << ",contribution_" << d;
  out << '\n';
  auto entries = cm.entries;
  std::sort(entries.begin(), entries.end(), [](const Contribution& a, const Contribution& b) {
    return a.visit != b.visit ? a.visit < b.visit : a.code < b.code;
  });
  for (const auto& e : entries) {
    if (e.visit >= record.visits.size()) throw ArgumentError("contribution refers to a missing visit");
    out << (e.visit + 1) << ',' << record.visits[e.visit].day << ','
        << data::sanitize_name(vocab.name(static_cast<std::size_t>(e.code))) << ',' << e.code;
    for (double w : e.omega) out << ',' << format_double(w);
    out << '\n';
  }
}

void export_contribution_timeline(const ContributionMatrix& cm, const data::PatientRecord& record,
                                  const data::Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  export_contribution_timeline(cm, record, vocab, out);
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<TimelineRow> read_contribution_timeline(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header");
  if (line.rfind("visit_index,day_offset,code_name,code_index", 0) != 0) throw ParseError("line 1: bad header");
  const auto width = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 3;
  std::vector<TimelineRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4 + width) throw ParseError("line " + std::to_string(line_no) + ": wrong column count");
    TimelineRow row;
    row.visit_index = parse_integer<std::size_t>(cells[0], line_no);
    row.day_offset = parse_integer<std::int64_t>(cells[1], line_no);
    row.code_name = cells[2];
    row.code_index = parse_integer<int>(cells[3], line_no);
    for (std::size_t d = 0; d < width; ++d) row.contributions.push_back(parse_double(cells[4 + d], line_no));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace retain::interpret
