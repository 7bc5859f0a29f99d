#include "cscale/model_io.hpp"

#include <fstream>
#include <sstream>

#include "io_util.hpp"

namespace cscale {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'S', 'M'};

std::string shape_csv(const Shape& shape) {
  std::string out;
  for (int i = 0; i < shape.rank(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<int> parse_dims(const std::string& csv) {
  std::vector<int> dims;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) dims.push_back(std::stoi(item));
  return dims;
}

template <typename T>
void write_header(const NetworkModel<T>& model, std::ostream& os) {
  os << "input " << shape_csv(model.input_shape) << "\n";
  os << "iteration " << model.metadata.iteration << "\n";
  os << "provenance " << io::escape_line(model.metadata.provenance) << "\n";
  os << "layers " << model.layers.size() << "\n";
  for (const auto& layer : model.layers) {
    switch (layer_kind(layer)) {
      case LayerKind::Conv: {
        const auto& conv = std::get<ConvLayer<T>>(layer);
        os << "layer conv frozen=" << (conv.frozen ? 1 : 0) << " kernel=" << shape_csv(conv.kernel.shape()) << "\n";
        break;
      }
      case LayerKind::Scaling:
        os << "layer scaling size=" << std::get<ScalingLayer<T>>(layer).scale.extent(0) << "\n";
        break;
      case LayerKind::MaxPool:
        os << "layer maxpool\n";
        break;
      case LayerKind::Gap:
        os << "layer gap\n";
        break;
      case LayerKind::Dense: {
        const auto& dense = std::get<DenseLayer<T>>(layer);
        os << "layer dense trainable=" << (dense.trainable ? 1 : 0) << " shape=" << shape_csv(dense.weight.shape())
           << "\n";
        break;
      }
    }
  }
  os << "end\n";
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  if constexpr (std::is_same_v<T, float>) {
    io::write_f32_payload(os, t.data(), static_cast<size_t>(t.size()));
  } else {
    Tensor<float> narrowed = t.template cast<float>();
    io::write_f32_payload(os, narrowed.data(), static_cast<size_t>(narrowed.size()));
  }
}

Tensor<float> read_tensor(std::istream& is, const Shape& shape, const char* what) {
  auto values = io::read_f32_payload(is, static_cast<size_t>(shape.elements()), what);
  return Tensor<float>(shape, std::move(values));
}

std::string expect_token(std::istringstream& line, const std::string& line_text) {
  std::string tok;
  if (!(line >> tok)) throw FormatError("malformed model header line: '" + line_text + "'");
  return tok;
}

int parse_flag(const std::string& tok, const std::string& key) {
  if (tok.rfind(key + "=", 0) != 0) throw FormatError("expected '" + key + "=' in model header, got '" + tok + "'");
  return std::stoi(tok.substr(key.size() + 1));
}

std::string parse_value(const std::string& tok, const std::string& key) {
  if (tok.rfind(key + "=", 0) != 0) throw FormatError("expected '" + key + "=' in model header, got '" + tok + "'");
  return tok.substr(key.size() + 1);
}

}  // namespace

template <typename T>
void save_model_stream(const NetworkModel<T>& model, std::ostream& os) {
  validate_model(model);
  io::write_bytes(os, kMagic, 4);
  io::write_le<uint16_t>(os, kModelFormatVersion);

  std::ostringstream header;
  write_header(model, header);
  const std::string header_text = header.str();
  io::write_le<uint32_t>(os, static_cast<uint32_t>(header_text.size()));
  io::write_bytes(os, header_text.data(), header_text.size());

  for (const auto& layer : model.layers) {
    switch (layer_kind(layer)) {
      case LayerKind::Conv: {
        const auto& conv = std::get<ConvLayer<T>>(layer);
        write_tensor(os, conv.kernel);
        write_tensor(os, conv.bias);
        break;
      }
      case LayerKind::Scaling:
        write_tensor(os, std::get<ScalingLayer<T>>(layer).scale);
        break;
      case LayerKind::Dense: {
        const auto& dense = std::get<DenseLayer<T>>(layer);
        write_tensor(os, dense.weight);
        write_tensor(os, dense.bias);
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::Gap:
        break;
    }
  }
}

NetworkModel<float> load_model_stream(std::istream& is) {
  char magic[4];
  io::read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a model file (bad magic)");
  const uint16_t version = io::read_le<uint16_t>(is, "version");
  if (version > kModelFormatVersion) {
    throw FormatError("model format version " + std::to_string(version) + " is newer than supported version " +
                      std::to_string(kModelFormatVersion));
  }

  const uint32_t header_len = io::read_le<uint32_t>(is, "header length");
  std::string header_text(header_len, '\0');
  io::read_bytes(is, header_text.data(), header_len, "header");
  std::istringstream header(header_text);

  NetworkModel<float> model;
  size_t layer_count = 0;
  std::string line;
  bool saw_end = false;
  // Pass 1: structure only; tensor shapes drive the payload reads below.
  struct PendingLayer {
    LayerKind kind;
    Shape shape;  // kernel / weight / scale shape
    bool flag = false;
  };
  std::vector<PendingLayer> pending;

  while (std::getline(header, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key = expect_token(ls, line);
    if (key == "input") {
      std::string csv = expect_token(ls, line);
      model.input_shape = Shape(parse_dims(csv));
    } else if (key == "iteration") {
      ls >> model.metadata.iteration;
    } else if (key == "provenance") {
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
      model.metadata.provenance = io::unescape_line(rest);
    } else if (key == "layers") {
      ls >> layer_count;
    } else if (key == "layer") {
      std::string kind = expect_token(ls, line);
      if (kind == "conv") {
        PendingLayer p{LayerKind::Conv, Shape{1}, false};
        p.flag = parse_flag(expect_token(ls, line), "frozen") != 0;
        p.shape = Shape(parse_dims(parse_value(expect_token(ls, line), "kernel")));
        pending.push_back(p);
      } else if (kind == "scaling") {
        PendingLayer p{LayerKind::Scaling, Shape{1}, false};
        p.shape = Shape{std::stoi(parse_value(expect_token(ls, line), "size"))};
        pending.push_back(p);
      } else if (kind == "maxpool") {
        pending.push_back({LayerKind::MaxPool, Shape{1}, false});
      } else if (kind == "gap") {
        pending.push_back({LayerKind::Gap, Shape{1}, false});
      } else if (kind == "dense") {
        PendingLayer p{LayerKind::Dense, Shape{1}, false};
        p.flag = parse_flag(expect_token(ls, line), "trainable") != 0;
        p.shape = Shape(parse_dims(parse_value(expect_token(ls, line), "shape")));
        pending.push_back(p);
      } else {
        throw FormatError("unknown layer kind '" + kind + "' in model header");
      }
    } else if (key == "end") {
      saw_end = true;
      break;
    } else {
      throw FormatError("unknown model header key '" + key + "'");
    }
  }
  if (!saw_end) throw FormatError("model header missing 'end' marker");
  if (pending.size() != layer_count) {
    throw FormatError("model header declares " + std::to_string(layer_count) + " layers but lists " +
                      std::to_string(pending.size()));
  }

  for (const auto& p : pending) {
    switch (p.kind) {
      case LayerKind::Conv: {
        ConvLayer<float> conv;
        conv.kernel = read_tensor(is, p.shape, "conv kernel");
        conv.bias = read_tensor(is, Shape{p.shape[3]}, "conv bias");
        conv.frozen = p.flag;
        model.layers.push_back(std::move(conv));
        break;
      }
      case LayerKind::Scaling:
        model.layers.push_back(ScalingLayer<float>{read_tensor(is, p.shape, "scaling weights")});
        break;
      case LayerKind::MaxPool:
        model.layers.push_back(MaxPoolLayer{});
        break;
      case LayerKind::Gap:
        model.layers.push_back(GapLayer{});
        break;
      case LayerKind::Dense: {
        DenseLayer<float> dense;
        dense.weight = read_tensor(is, p.shape, "dense weight");
        dense.bias = read_tensor(is, Shape{p.shape[1]}, "dense bias");
        dense.trainable = p.flag;
        model.layers.push_back(std::move(dense));
        break;
      }
    }
  }

  validate_model(model);
  return model;
}

template <typename T>
void save_model(const NetworkModel<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_model_stream(model, os);
  os.flush();
  if (!os) throw IoError("write to '" + path + "' failed");
}

NetworkModel<float> load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return load_model_stream(is);
}

template void save_model(const NetworkModel<float>&, const std::string&);
template void save_model(const NetworkModel<double>&, const std::string&);
template void save_model_stream(const NetworkModel<float>&, std::ostream&);
template void save_model_stream(const NetworkModel<double>&, std::ostream&);

}  // namespace cscale
