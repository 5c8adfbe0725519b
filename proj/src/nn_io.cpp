#include "reluopt/nn_io.hpp"

#include <fstream>

#include "reluopt/errors.hpp"

namespace reluopt::nn {

using nlohmann::json;

json to_json(const ReluNetwork& net) {
  json doc;
  doc["format"] = "relu-network";
  doc["version"] = kNetworkFormatVersion;
  doc["layer_sizes"] = net.layer_sizes();
  doc["kind"] = net.is_convexified() ? "convexified" : "unconstrained";
  doc["k"] = net.boundary();
  json weights = json::array();
  json biases = json::array();
  for (const Dense& d : net.layers()) {
    weights.push_back(d.weights);
    biases.push_back(d.bias);
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  json in = json::array();
  for (const Range& r : net.input_norm) in.push_back({r.min, r.max});
  doc["input_norm"] = std::move(in);
  doc["output_norm"] = {net.output_norm.min, net.output_norm.max};
  return doc;
}

ReluNetwork network_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "relu-network") {
      throw ValidationError("network document has wrong format tag");
    }
    const int version = doc.at("version").get<int>();
    if (version != kNetworkFormatVersion) {
      throw ValidationError("unsupported network format version " + std::to_string(version));
    }
    const auto sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
    const auto kind_tag = doc.at("kind").get<std::string>();
    NetworkKind kind = Unconstrained{};
    if (kind_tag == "convexified") {
      kind = Convexified{doc.at("k").get<int>()};
    } else if (kind_tag != "unconstrained") {
      throw ValidationError("unknown network kind '" + kind_tag + "'");
    }
    ReluNetwork net(sizes, kind);
    const json& weights = doc.at("weights");
    const json& biases = doc.at("biases");
    if (weights.size() != net.layers().size() || biases.size() != net.layers().size()) {
      throw ShapeError("network document layer count mismatch");
    }
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      Dense& d = net.layers()[l];
      auto w = weights[l].get<std::vector<double>>();
      auto b = biases[l].get<std::vector<double>>();
      if (w.size() != d.weights.size() || b.size() != d.bias.size()) {
        throw ShapeError("network document layer " + std::to_string(l + 1) + " has wrong shape");
      }
      d.weights = std::move(w);
      d.bias = std::move(b);
    }
    const json& in = doc.at("input_norm");
    if (in.size() != net.input_size()) throw ShapeError("input_norm size mismatch");
    for (std::size_t i = 0; i < in.size(); ++i) {
      net.input_norm[i] = Range{in[i].at(0).get<double>(), in[i].at(1).get<double>()};
    }
    const json& out = doc.at("output_norm");
    net.output_norm = Range{out.at(0).get<double>(), out.at(1).get<double>()};
    net.validate();
    return net;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed network document: ") + e.what());
  }
}

json to_json(const TrainReport& report) {
  return json{{"format", "train-report"},
              {"version", 1},
              {"train_loss", report.train_loss},
              {"validation_loss", report.validation_loss},
              {"train_rmse", report.train_rmse},
              {"validation_rmse", report.validation_rmse},
              {"train_size", report.train_size},
              {"validation_size", report.validation_size},
              {"wall_time", report.wall_time}};
}

void save_network(const ReluNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(net).dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

ReluNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse " + path.string() + ": " + e.what());
  }
  return network_from_json(doc);
}

}  // namespace reluopt::nn
