#include "brits/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace brits {

using json = nlohmann::ordered_json;

namespace {

json matrix_to_json(const Tensor& m, bool as_int) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (double v : m.row(r)) {
      if (as_int) {
        row.push_back(static_cast<int>(v));
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Null cells are accepted as missing and reported through `nulls`.
Tensor matrix_from_json(const json& j, const std::string& key, std::vector<std::size_t>* nulls) {
  if (!j.is_array()) throw DataError("'" + key + "' must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j[0].size();
  Tensor m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw DataError("'" + key + "' row " + std::to_string(r) + " has the wrong length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const json& v = j[r][c];
      if (v.is_null() && nulls) {
        nulls->push_back(r * cols + c);
      } else if (v.is_number()) {
        m(r, c) = v.get<double>();
      } else {
        throw DataError("'" + key + "' holds a non-numeric entry");
      }
    }
  }
  return m;
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string("missing key '") + key + "'");
  return *it;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return in;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_ndjson(std::ostream& out, const Dataset& dataset) {
  for (const auto& s : dataset) {
    json j;
    j["values"] = matrix_to_json(s.values, false);
    j["masks"] = matrix_to_json(s.masks, true);
    j["timestamps"] = s.timestamps;
    j["eval_values"] = matrix_to_json(s.eval_values, false);
    j["eval_masks"] = matrix_to_json(s.eval_masks, true);
    j["label"] = s.label ? json(*s.label) : json(nullptr);
    out << j.dump() << '\n';
  }
}

Dataset read_ndjson(std::istream& in) {
  Dataset dataset;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TimeSeriesSample s;
      std::vector<std::size_t> nulls;
      s.values = matrix_from_json(require(j, "values"), "values", &nulls);
      s.masks = matrix_from_json(require(j, "masks"), "masks", nullptr);
      for (std::size_t k : nulls) {
        s.values[k] = 0.0;
        if (k < s.masks.size()) s.masks[k] = 0.0;
      }
      s.timestamps = require(j, "timestamps").get<std::vector<double>>();
      const auto ev = j.find("eval_values");
      const auto em = j.find("eval_masks");
      s.eval_values = ev == j.end() || ev->is_null() ? Tensor(s.values.rows(), s.values.cols())
                                                     : matrix_from_json(*ev, "eval_values", nullptr);
      s.eval_masks = em == j.end() || em->is_null() ? Tensor(s.values.rows(), s.values.cols())
                                                    : matrix_from_json(*em, "eval_masks", nullptr);
      const auto label = j.find("label");
      if (label != j.end() && !label->is_null()) s.label = label->get<double>();
      validate(s);
      dataset.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return dataset;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  auto out = open_out(path);
  write_ndjson(out, dataset);
}

Dataset load_dataset(const std::string& path) {
  auto in = open_in(path);
  Dataset d = read_ndjson(in);
  if (d.empty()) throw DataError(path + ": no samples");
  return d;
}

void write_imputation_csv(std::ostream& out, const Dataset& dataset,
                          const std::vector<Tensor>& imputations) {
  if (imputations.size() != dataset.size()) {
    throw DataError("imputation count does not match the dataset");
  }
  out << "sample_id,t,d,truth,imputed,was_eval\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t d = 0; d < s.features(); ++d) {
        const bool was_eval = s.eval_masks(t, d) == 1.0;
        std::string truth;
        if (was_eval) {
          truth = fmt(s.eval_values(t, d));
        } else if (s.masks(t, d) == 1.0) {
          truth = fmt(s.values(t, d));
        }
        out << i << ',' << t << ',' << d << ',' << truth << ',' << fmt(imputations[i](t, d)) << ','
            << (was_eval ? 1 : 0) << '\n';
      }
    }
  }
}

void write_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve) {
  out << "epoch,train_loss,val_mae\n";
  for (const auto& r : curve) out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_mae) << '\n';
}

void write_checkpoint(std::ostream& out, const Checkpoint& cp) {
  json j;
  j["model"] = model_name(cp.config.kind);
  j["task"] = task_name(cp.config.task);
  j["input_dim"] = cp.config.input_dim;
  j["hidden_dim"] = cp.config.hidden_dim;
  j["output_dim"] = cp.config.output_dim;
  j["normalization"] = {{"mean", cp.stats.mean}, {"std", cp.stats.std}};
  json params = json::object();
  for (std::size_t i = 0; i < cp.params.size(); ++i) {
    const Parameter& p = cp.params[i];
    params[p.name] = {{"shape", {p.value.rows(), p.value.cols()}}, {"values", p.value.storage()}};
  }
  j["parameters"] = std::move(params);
  out << j.dump(1) << '\n';
}

Checkpoint read_checkpoint(std::istream& in) {
  try {
    const json j = json::parse(in);
    Checkpoint cp;
    cp.config.kind = parse_model(require(j, "model").get<std::string>());
    cp.config.task = parse_task(require(j, "task").get<std::string>());
    cp.config.input_dim = require(j, "input_dim").get<std::size_t>();
    cp.config.hidden_dim = require(j, "hidden_dim").get<std::size_t>();
    cp.config.output_dim = require(j, "output_dim").get<std::size_t>();
    const json& norm = require(j, "normalization");
    cp.stats.mean = require(norm, "mean").get<std::vector<double>>();
    cp.stats.std = require(norm, "std").get<std::vector<double>>();
    if (cp.stats.mean.size() != cp.config.input_dim || cp.stats.std.size() != cp.config.input_dim) {
      throw DataError("checkpoint normalization does not match input_dim");
    }
    for (const auto& [name, entry] : require(j, "parameters").items()) {
      const auto shape = require(entry, "shape").get<std::vector<std::size_t>>();
      auto values = require(entry, "values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] * shape[1] != values.size()) {
        throw DataError("checkpoint parameter '" + name + "' has inconsistent shape");
      }
      cp.params.add(name, Tensor(shape[0], shape[1], std::move(values)));
    }
    return cp;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  auto out = open_out(path);
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto in = open_in(path);
  return read_checkpoint(in);
}

Model model_from_checkpoint(const Checkpoint& cp, std::size_t expected_dim) {
  if (cp.config.input_dim != expected_dim) {
    throw DataError("checkpoint has D=" + std::to_string(cp.config.input_dim) +
                    " but the dataset has D=" + std::to_string(expected_dim));
  }
  return Model(cp.config, cp.params);
}

json metrics_to_json(const Metrics& m) {
  json j;
  j["mae"] = m.mae;
  j["mre"] = m.mre;
  auto spread = [&](const char* key, const std::optional<double>& v,
                    const std::optional<MeanStd>& s) {
    if (!v) return;
    j[key] = *v;
    if (s) {
      j[std::string(key) + "_std"] = s->std;
      j[std::string(key) + "_summary"] = s->format();
    }
  };
  spread("auc", m.auc, m.auc_spread);
  spread("accuracy", m.accuracy, m.accuracy_spread);
  spread("label_mae", m.label_mae, m.label_mae_spread);
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace brits
