#include "cosa/checkpoint.hpp"

#include <fstream>

namespace cosa {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (j.at("rows").get<Eigen::Index>() != rows || j.at("cols").get<Eigen::Index>() != cols) {
    throw ParseError("checkpoint parameter " + name + ": shape mismatch");
  }
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint parameter " + name + ": wrong element count");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = data[static_cast<std::size_t>(r * cols + c)];
      if (!v.is_number()) throw ParseError("checkpoint parameter " + name + ": non-numeric entry");
      m(r, c) = v.get<double>();
    }
  }
  if (!m.allFinite()) throw ParseError("checkpoint parameter " + name + ": non-finite entry");
  return m;
}

json header(const std::string& kind) {
  return {{"format", "cosa-ckpt"}, {"version", kCheckpointVersion}, {"kind", kind}};
}

void check_header(const json& j, const std::string& kind) {
  if (j.value("format", "") != "cosa-ckpt") throw ParseError("not a cosa-ckpt file");
  if (j.value("version", -1) != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + j.value("version", json(-1)).dump());
  }
  if (j.value("kind", "") != kind) {
    throw ParseError("checkpoint kind is '" + j.value("kind", "") + "', expected '" + kind + "'");
  }
}

template <class Net>
json params_to_json(Net& net) {
  json p = json::object();
  for (const auto& ref : nn::parameters(net)) p[ref.name] = matrix_to_json(*ref.value);
  return p;
}

// Loads into a network already built with the expected shapes.
template <class Net>
void params_from_json(Net& net, const json& p) {
  auto refs = nn::parameters(net);
  if (p.size() != refs.size()) throw ParseError("checkpoint has unexpected parameter set");
  for (const auto& ref : refs) {
    if (!p.contains(ref.name)) throw ParseError("checkpoint missing parameter " + ref.name);
    *ref.value = matrix_from_json(p.at(ref.name), ref.value->rows(), ref.value->cols(), ref.name);
  }
}

}  // namespace

json to_json(const nn::AutoEncoder& ae) {
  auto copy = ae;
  json j = header("autoencoder");
  j["shape"] = {{"hidden", copy.encoder.hidden()},
                {"decoder_hidden", copy.decoder.mlp.front().out()},
                {"latent", copy.encoder.latent_dim()},
                {"num_points", copy.decoder.num_points()}};
  j["encoder"] = params_to_json(copy.encoder);
  j["decoder"] = params_to_json(copy.decoder);
  return j;
}

nn::AutoEncoder autoencoder_from_json(const json& j) {
  check_header(j, "autoencoder");
  try {
    const auto& s = j.at("shape");
    const int hidden = s.at("hidden").get<int>();
    const int dec_hidden = s.value("decoder_hidden", hidden);
    const int latent = s.at("latent").get<int>();
    const int n = s.at("num_points").get<int>();
    if (hidden < 1 || dec_hidden < 1 || latent < 1 || n < 1) throw ParseError("invalid autoencoder shape");
    nn::AutoEncoder ae{nn::make_encoder(hidden, latent, 0), nn::make_decoder(latent, dec_hidden, n, 0)};
    params_from_json(ae.encoder, j.at("encoder"));
    params_from_json(ae.decoder, j.at("decoder"));
    return ae;
  } catch (const json::exception& e) {
    throw ParseError(std::string("autoencoder checkpoint: ") + e.what());
  }
}

json to_json(const nn::Classifier& clf) {
  auto copy = clf;
  json j = header("classifier");
  j["arch"] = nn::arch_name(clf.arch);
  j["shape"] = {{"hidden", clf.head.front().in()}, {"num_classes", clf.num_classes}, {"k", clf.k}};
  j["params"] = params_to_json(copy);
  return j;
}

nn::Classifier classifier_from_json(const json& j) {
  check_header(j, "classifier");
  try {
    const auto arch = nn::arch_from_name(j.at("arch").get<std::string>());
    const auto& s = j.at("shape");
    const int hidden = s.at("hidden").get<int>();
    const int z = s.at("num_classes").get<int>();
    const int k = s.at("k").get<int>();
    if (hidden < 1 || z < 2 || k < 1) throw ParseError("invalid classifier shape");
    auto clf = nn::make_classifier(arch, hidden, z, 0, k);
    params_from_json(clf, j.at("params"));
    return clf;
  } catch (const json::exception& e) {
    throw ParseError(std::string("classifier checkpoint: ") + e.what());
  } catch (const PreconditionError& e) {
    throw ParseError(std::string("classifier checkpoint: ") + e.what());
  }
}

json to_json(const DictionarySet& dicts) {
  json j = header("cosa-dict");
  json arr = json::array();
  for (const auto& [label, d] : dicts) {
    json cols = json::array();
    for (Eigen::Index c = 0; c < d.atoms.cols(); ++c) {
      cols.push_back(std::vector<double>(d.atoms.col(c).data(), d.atoms.col(c).data() + d.atoms.rows()));
    }
    arr.push_back({{"y", label}, {"m_y", d.size()}, {"d", d.dim()}, {"columns", cols}});
  }
  j["dictionaries"] = arr;
  return j;
}

DictionarySet dictionaries_from_json(const json& j) {
  check_header(j, "cosa-dict");
  DictionarySet out;
  try {
    for (const auto& e : j.at("dictionaries")) {
      const int y = e.at("y").get<int>();
      const int m = e.at("m_y").get<int>();
      const int d = e.at("d").get<int>();
      const auto& cols = e.at("columns");
      if (m < 1 || d < 1 || static_cast<int>(cols.size()) != m) throw ParseError("dictionary shape mismatch");
      PrototypeDictionary dict{y, Eigen::MatrixXd(d, m)};
      for (int c = 0; c < m; ++c) {
        const auto v = cols[static_cast<std::size_t>(c)].get<std::vector<double>>();
        if (static_cast<int>(v.size()) != d) throw ParseError("dictionary column length mismatch");
        for (int r = 0; r < d; ++r) dict.atoms(r, c) = v[static_cast<std::size_t>(r)];
      }
      if (!dict.atoms.allFinite()) throw ParseError("dictionary has non-finite entries");
      if (out.count(y)) throw ParseError("duplicate dictionary for class " + std::to_string(y));
      out[y] = std::move(dict);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("dictionary file: ") + e.what());
  }
  return out;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(1) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_autoencoder(const std::filesystem::path& path, const nn::AutoEncoder& ae) { write_json(path, to_json(ae)); }
void save_classifier(const std::filesystem::path& path, const nn::Classifier& clf) { write_json(path, to_json(clf)); }
void save_dictionaries(const std::filesystem::path& path, const DictionarySet& d) { write_json(path, to_json(d)); }

nn::AutoEncoder load_autoencoder(const std::filesystem::path& path) { return autoencoder_from_json(read_json(path)); }
nn::Classifier load_classifier(const std::filesystem::path& path) { return classifier_from_json(read_json(path)); }
DictionarySet load_dictionaries(const std::filesystem::path& path) { return dictionaries_from_json(read_json(path)); }

}  // namespace cosa
