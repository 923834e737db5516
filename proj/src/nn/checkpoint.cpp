#include "shrdlurn/nn/checkpoint.hpp"

#include <fstream>

namespace shrdlurn::nn {

namespace {

constexpr const char* kFormat = "shrdlurn-checkpoint";
constexpr int kVersion = 1;

template <typename T>
constexpr const char* precision_name() {
  return sizeof(T) == 8 ? "float64" : "float32";
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"encoder", encoder_name(c.encoder)},
          {"decoder", decoder_name(c.decoder)},
          {"hidden", c.hidden},
          {"lstm_layers", c.lstm_layers},
          {"conv_layers", c.conv_layers},
          {"kernel", c.kernel},
          {"dropout", c.dropout},
          {"init_scale", c.init_scale},
          {"embed_scale", c.embed_scale}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder = parse_encoder(j.at("encoder").get<std::string>());
  c.decoder = parse_decoder(j.at("decoder").get<std::string>());
  c.hidden = j.at("hidden").get<int>();
  c.lstm_layers = j.value("lstm_layers", c.lstm_layers);
  c.conv_layers = j.value("conv_layers", c.conv_layers);
  c.kernel = j.value("kernel", c.kernel);
  c.dropout = j.value("dropout", c.dropout);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.embed_scale = j.value("embed_scale", c.embed_scale);
  c.validate();
  return c;
}

template <typename T>
nlohmann::json model_to_json(const Model<T>& model) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["precision"] = precision_name<T>();
  j["config"] = config_to_json(model.config());
  j["vocab"] = {{"words", model.vocab().words()}, {"base_size", model.vocab().base_size()}};
  auto& params = j["params"] = nlohmann::json::array();
  for (const auto& p : model.params()) {
    std::vector<double> data(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      data[static_cast<std::size_t>(i)] = static_cast<double>(p.value.data()[i]);
    }
    params.push_back({{"name", p.name},
                      {"rows", p.value.rows()},
                      {"cols", p.value.cols()},
                      {"data", std::move(data)}});
  }
  return j;
}

template <typename T>
Model<T> model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kFormat) throw std::runtime_error("not a shrdlurn checkpoint");
  if (j.value("version", 0) != kVersion) throw std::runtime_error("unsupported checkpoint version");
  const ModelConfig config = config_from_json(j.at("config"));

  const auto words = j.at("vocab").at("words").get<std::vector<std::string>>();
  const int base = j.at("vocab").at("base_size").get<int>();
  if (base < 1 || base > static_cast<int>(words.size())) throw std::runtime_error("bad vocabulary size");
  Vocabulary vocab(std::span<const std::string>(words.data(), static_cast<std::size_t>(base)));
  vocab.freeze();

  Model<T> model(config, std::move(vocab), 0);
  if (base < static_cast<int>(words.size())) {
    model.register_new_words(
        std::span<const std::string>(words.data() + base, words.size() - static_cast<std::size_t>(base)),
        0);
  }
  auto& store = model.params();
  const auto& params = j.at("params");
  if (static_cast<int>(params.size()) != store.size()) {
    throw std::runtime_error("checkpoint parameter count does not match its architecture");
  }
  for (const auto& pj : params) {
    auto& p = store[store.index_of(pj.at("name").get<std::string>())];
    const auto rows = pj.at("rows").get<Eigen::Index>();
    const auto cols = pj.at("cols").get<Eigen::Index>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw std::runtime_error("shape mismatch for parameter " + p.name);
    }
    const auto& data = pj.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw std::runtime_error("truncated data for parameter " + p.name);
    }
    for (Eigen::Index i = 0; i < rows * cols; ++i) {
      p.value.data()[i] = static_cast<T>(data[static_cast<std::size_t>(i)].get<double>());
    }
  }
  return model;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << model_to_json(model).dump();
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return model_from_json<T>(nlohmann::json::parse(in));
}

template nlohmann::json model_to_json<float>(const Model<float>&);
template nlohmann::json model_to_json<double>(const Model<double>&);
template Model<float> model_from_json<float>(const nlohmann::json&);
template Model<double> model_from_json<double>(const nlohmann::json&);
template void save_checkpoint<float>(const Model<float>&, const std::string&);
template void save_checkpoint<double>(const Model<double>&, const std::string&);
template Model<float> load_checkpoint<float>(const std::string&);
template Model<double> load_checkpoint<double>(const std::string&);

}  // namespace shrdlurn::nn
