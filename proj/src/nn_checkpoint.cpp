#include "pivot/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pivot/errors.hpp"

namespace pivot::nn {

namespace {

using json = nlohmann::ordered_json;

void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

double get_le(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(k)])) << (8 * k);
  }
  return std::bit_cast<double>(bits);
}

void append_matrix(std::string& blob, const Eigen::MatrixXd& m) {
  // Row-major order in the blob.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le(blob, m(r, c));
  }
}

}  // namespace

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".bin";
  return p;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const Hyper& h = params.hyper;
  json j;
  j["format"] = "pivot-estimator-checkpoint";
  j["version"] = kCheckpointVersion;
  j["architecture"] = std::string(to_string(h.arch));
  j["hyper"] = {{"mode", std::string(to_string(h.mode))},
                {"input_size", h.input_size},
                {"hidden_size", h.hidden_size},
                {"num_layers", h.num_layers},
                {"dropout", h.dropout},
                {"head_layers", h.head_layers},
                {"head_hidden", h.head_hidden},
                {"activation", std::string(to_string(h.activation))},
                {"window_size", h.window_size}};
  j["target_norm"] = {{"alpha_scale", params.norm.alpha_scale}, {"omega_scale", params.norm.omega_scale}};
  j["byte_order"] = "little";
  j["dtype"] = "float64";
  json tensors = json::array();
  std::string blob;
  for (const auto& t : params.tensors) {
    tensors.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
    append_matrix(blob, t.value);
  }
  tensors.push_back({{"name", "input.mean"}, {"rows", params.input_mean.size()}, {"cols", 1}});
  append_matrix(blob, params.input_mean);
  tensors.push_back({{"name", "input.scale"}, {"rows", params.input_scale.size()}, {"cols", 1}});
  append_matrix(blob, params.input_scale);
  j["tensors"] = tensors;
  j["blob"] = checkpoint_blob_path(path).filename().string();
  j["blob_bytes"] = blob.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream bin(checkpoint_blob_path(path), std::ios::binary);
    if (!bin) throw Error("cannot write " + checkpoint_blob_path(path).string());
    bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!bin) throw Error("failed writing " + checkpoint_blob_path(path).string());
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  ModelParams p;
  try {
    if (j.at("format").get<std::string>() != "pivot-estimator-checkpoint") {
      throw IntegrityError(path.string() + ": not an estimator checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw IntegrityError(path.string() + ": checkpoint version " + std::to_string(version) +
                           " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto& hj = j.at("hyper");
    Hyper& h = p.hyper;
    h.arch = architecture_from_string(j.at("architecture").get<std::string>());
    h.mode = output_mode_from_string(hj.at("mode").get<std::string>());
    h.input_size = hj.at("input_size").get<int>();
    h.hidden_size = hj.at("hidden_size").get<int>();
    h.num_layers = hj.at("num_layers").get<int>();
    h.dropout = hj.at("dropout").get<double>();
    h.head_layers = hj.at("head_layers").get<int>();
    h.head_hidden = hj.at("head_hidden").get<int>();
    h.activation = activation_from_string(hj.at("activation").get<std::string>());
    h.window_size = hj.at("window_size").get<int>();
    p.norm.alpha_scale = j.at("target_norm").at("alpha_scale").get<double>();
    p.norm.omega_scale = j.at("target_norm").at("omega_scale").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const RangeError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  std::ifstream bin(checkpoint_blob_path(path), std::ios::binary);
  if (!bin) throw IntegrityError("missing checkpoint blob " + checkpoint_blob_path(path).string());
  std::ostringstream buf;
  buf << bin.rdbuf();
  const std::string blob = buf.str();

  const auto shapes = tensor_shapes(p.hyper);
  const auto& tj = j.at("tensors");
  if (tj.size() != shapes.size() + 2) {
    throw IntegrityError(path.string() + ": manifest lists " + std::to_string(tj.size()) +
                         " tensors, architecture implies " + std::to_string(shapes.size() + 2));
  }
  std::size_t expected = 0;
  for (const auto& t : tj) expected += t.at("rows").get<std::size_t>() * t.at("cols").get<std::size_t>() * 8;
  if (expected != blob.size()) {
    throw IntegrityError(checkpoint_blob_path(path).string() + ": " + std::to_string(blob.size()) +
                         " bytes, manifest expects " + std::to_string(expected));
  }

  std::size_t pos = 0;
  auto read = [&](const json& t) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(r, c) = get_le(blob, pos);
        pos += 8;
      }
    }
    return m;
  };
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& t = tj[i];
    const std::string name = t.at("name").get<std::string>();
    if (name != shapes[i].first || t.at("rows").get<int>() != shapes[i].second.first ||
        t.at("cols").get<int>() != shapes[i].second.second) {
      throw IntegrityError(path.string() + ": tensor '" + name + "' does not match the architecture");
    }
    p.tensors.push_back({name, read(t)});
  }
  const Eigen::MatrixXd mean = read(tj[shapes.size()]);
  const Eigen::MatrixXd scale = read(tj[shapes.size() + 1]);
  if (mean.rows() != p.hyper.input_size || scale.rows() != p.hyper.input_size) {
    throw IntegrityError(path.string() + ": input normalisation has the wrong size");
  }
  p.input_mean = mean.col(0);
  p.input_scale = scale.col(0);
  return p;
}

}  // namespace pivot::nn
