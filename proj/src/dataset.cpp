#include "cscale/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cscale/image_io.hpp"
#include "io_util.hpp"

namespace cscale {

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "validation" || name == "val") return Split::Validation;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + name + "' (expected train/validation/test)");
}

void SplitFractions::validate() const {
  if (train < 0 || validation < 0 || test < 0) throw ConfigError("split fractions must be non-negative");
  const double sum = train + validation + test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
  }
  if (train <= 0) throw ConfigError("train fraction must be positive");
}

template <typename T>
Shape DatasetContainer<T>::image_shape() const {
  if (images.empty()) throw StateError("dataset is empty");
  return images.front().shape();
}

template <typename T>
std::vector<int> DatasetContainer<T>::indices_of(Split split) const {
  std::vector<int> out;
  for (size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(static_cast<int>(i));
  }
  return out;
}

template <typename T>
void DatasetContainer<T>::validate() const {
  if (images.empty()) throw StateError("dataset is empty");
  if (labels.size() != images.size() || splits.size() != images.size()) {
    throw ContractError("dataset arrays disagree: " + std::to_string(images.size()) + " images, " +
                        std::to_string(labels.size()) + " labels, " + std::to_string(splits.size()) + " splits");
  }
  const Shape shape = images.front().shape();
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != shape) {
      throw ShapeError("image " + std::to_string(i) + " has shape " + images[i].shape().str() + ", expected " +
                       shape.str());
    }
    if (labels[i] != 0 && labels[i] != 1) {
      throw ContractError("label " + std::to_string(i) + " is " + std::to_string(labels[i]));
    }
  }
}

namespace {

// Largest-remainder rounding of n * fractions to exact integer counts.
std::array<int, 3> target_counts(int n, const SplitFractions& f) {
  const std::array<double, 3> want = {n * f.train, n * f.validation, n * f.test};
  std::array<int, 3> counts{};
  int assigned = 0;
  for (int s = 0; s < 3; ++s) {
    counts[static_cast<size_t>(s)] = static_cast<int>(std::floor(want[static_cast<size_t>(s)]));
    assigned += counts[static_cast<size_t>(s)];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ra = want[static_cast<size_t>(a)] - std::floor(want[static_cast<size_t>(a)]);
    const double rb = want[static_cast<size_t>(b)] - std::floor(want[static_cast<size_t>(b)]);
    if (ra != rb) return ra > rb;
    return a < b;
  });
  for (int k = 0; assigned < n; ++k, ++assigned) ++counts[static_cast<size_t>(order[static_cast<size_t>(k % 3)])];
  return counts;
}

}  // namespace

std::vector<Split> assign_splits(const std::vector<int>& labels, const std::vector<int64_t>& group_ids,
                                 const SplitFractions& fractions, Rng& rng) {
  fractions.validate();
  if (group_ids.size() != labels.size()) {
    throw ContractError("group ids and labels disagree in length");
  }
  const int n = static_cast<int>(labels.size());

  // Whole groups move together; negative ids are ungrouped singletons.
  std::map<int64_t, std::vector<int>> grouped;
  std::vector<std::vector<int>> groups;
  for (int i = 0; i < n; ++i) {
    if (group_ids[static_cast<size_t>(i)] < 0) {
      groups.push_back({i});
    } else {
      grouped[group_ids[static_cast<size_t>(i)]].push_back(i);
    }
  }
  for (auto& [id, members] : grouped) groups.push_back(std::move(members));

  // Bucket groups by majority label; allocation within each bucket chases
  // the bucket's own fractional targets so per-split class ratios stay
  // close to the global ratio, while global largest-remainder counts cap
  // the final split sizes exactly.
  std::array<std::vector<size_t>, 2> buckets;
  std::array<int, 2> bucket_samples{};
  for (size_t g = 0; g < groups.size(); ++g) {
    int pos = 0;
    for (int idx : groups[g]) pos += labels[static_cast<size_t>(idx)];
    const int majority = (2 * pos >= static_cast<int>(groups[g].size())) ? 1 : 0;
    buckets[static_cast<size_t>(majority)].push_back(g);
    bucket_samples[static_cast<size_t>(majority)] += static_cast<int>(groups[g].size());
  }

  const std::array<int, 3> global_cap = target_counts(n, fractions);
  std::array<int, 3> global_used{};
  std::vector<Split> result(static_cast<size_t>(n), Split::Train);
  const std::array<double, 3> frac = {fractions.train, fractions.validation, fractions.test};

  for (int label = 0; label <= 1; ++label) {
    auto& bucket = buckets[static_cast<size_t>(label)];
    rng.shuffle(bucket);
    std::array<double, 3> assigned{};
    const double total = bucket_samples[static_cast<size_t>(label)];
    for (size_t g : bucket) {
      const int size = static_cast<int>(groups[g].size());
      int best = -1;
      double best_deficit = -1e300;
      for (int s = 0; s < 3; ++s) {
        if (global_used[static_cast<size_t>(s)] + size > global_cap[static_cast<size_t>(s)]) continue;
        const double deficit = frac[static_cast<size_t>(s)] * total - assigned[static_cast<size_t>(s)];
        if (deficit > best_deficit) {
          best_deficit = deficit;
          best = s;
        }
      }
      if (best < 0) {
        // No split has room for the whole group; take the emptiest.
        int most_room = 0;
        for (int s = 1; s < 3; ++s) {
          if (global_cap[static_cast<size_t>(s)] - global_used[static_cast<size_t>(s)] >
              global_cap[static_cast<size_t>(most_room)] - global_used[static_cast<size_t>(most_room)]) {
            most_room = s;
          }
        }
        best = most_room;
      }
      for (int idx : groups[g]) result[static_cast<size_t>(idx)] = static_cast<Split>(best);
      assigned[static_cast<size_t>(best)] += size;
      global_used[static_cast<size_t>(best)] += size;
    }
  }
  return result;
}

void SyntheticSpec::validate() const {
  if (image_size < 4) throw ConfigError("synthetic.image_size must be >= 4");
  if (image_channels < 1) throw ConfigError("synthetic.image_channels must be >= 1");
  if (backbone_channels < 1) throw ConfigError("synthetic.backbone_channels must be >= 1");
  if (image_channels != backbone_channels) {
    throw ConfigError("synthetic generator pairs each backbone channel with one image plane; image_channels (" +
                      std::to_string(image_channels) + ") must equal backbone_channels (" +
                      std::to_string(backbone_channels) + ")");
  }
  if (static_cast<int>(informative.size()) > backbone_channels) {
    throw ConfigError("synthetic.informative names " + std::to_string(informative.size()) + " channels, backbone has " +
                      std::to_string(backbone_channels));
  }
  for (int idx : informative) {
    if (idx < 0 || idx >= backbone_channels) {
      throw ConfigError("synthetic.informative index " + std::to_string(idx) + " out of range for " +
                        std::to_string(backbone_channels) + " channels");
    }
  }
  if (noise_level < 0) throw ConfigError("synthetic.noise_level must be >= 0");
  if (stamps_per_image < 1) throw ConfigError("synthetic.stamps_per_image must be >= 1");
  if (stamp_amplitude <= 0) throw ConfigError("synthetic.stamp_amplitude must be > 0");
  if (sample_count < 4) throw ConfigError("synthetic.sample_count must be >= 4");
  if (positive_fraction <= 0 || positive_fraction >= 1) {
    throw ConfigError("synthetic.positive_fraction must lie strictly between 0 and 1");
  }
  fractions.validate();
}

template <typename T>
PlantedDataset<T> generate_planted_dataset(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const int size = spec.image_size;
  const int channels = spec.backbone_channels;

  // Zero-mean unit-norm 3x3 matched filters, one per channel. Zero mean
  // keeps raw plane averages uninformative about the label.
  std::vector<std::array<double, 9>> filters(static_cast<size_t>(channels));
  for (auto& f : filters) {
    double mean = 0.0;
    for (double& v : f) {
      v = rng.normal();
      mean += v;
    }
    mean /= 9.0;
    double norm = 0.0;
    for (double& v : f) {
      v -= mean;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : f) v /= norm;
  }

  // Block-diagonal backbone: channel j applies filter j to plane j only.
  Tensor<T> kernel(Shape{3, 3, channels, channels});
  for (int di = 0; di < 3; ++di) {
    for (int dj = 0; dj < 3; ++dj) {
      for (int j = 0; j < channels; ++j) {
        kernel.at(di, dj, j, j) = static_cast<T>(filters[static_cast<size_t>(j)][static_cast<size_t>(di * 3 + dj)]);
      }
    }
  }

  NetworkModel<T> model;
  model.input_shape = Shape{size, size, channels};
  model.layers.push_back(ConvLayer<T>{std::move(kernel), Tensor<T>(Shape{channels}), true});
  if (size % 2 == 0) model.layers.push_back(MaxPoolLayer{});
  model.layers.push_back(GapLayer{});
  model.layers.push_back(make_dense_head<T>(channels, 1, rng));
  model.metadata.provenance = "synthetic backbone seed=" + std::to_string(seed);
  validate_model(model);

  const int n = spec.sample_count;
  const int n_pos = std::clamp(static_cast<int>(std::lround(n * spec.positive_fraction)), 1, n - 1);
  std::vector<int> labels(static_cast<size_t>(n), 0);
  for (int i = 0; i < n_pos; ++i) labels[static_cast<size_t>(i)] = 1;
  rng.shuffle(labels);

  std::vector<int> informative = spec.informative;
  std::sort(informative.begin(), informative.end());

  DatasetContainer<T> data;
  data.images.reserve(static_cast<size_t>(n));
  data.labels = labels;
  data.seed = seed;
  {
    std::ostringstream prov;
    prov << "synthetic size=" << size << " channels=" << channels << " informative=";
    for (size_t i = 0; i < informative.size(); ++i) prov << (i ? "+" : "") << informative[i];
    prov << " noise=" << spec.noise_level << " stamps=" << spec.stamps_per_image << " amp=" << spec.stamp_amplitude
         << " n=" << n << " seed=" << seed;
    data.provenance = prov.str();
  }

  for (int i = 0; i < n; ++i) {
    Tensor<T> image(Shape{size, size, channels});
    if (spec.noise_level > 0) {
      for (int64_t e = 0; e < image.size(); ++e) image[e] = static_cast<T>(rng.normal(0.0, spec.noise_level));
    }
    if (labels[static_cast<size_t>(i)] == 1) {
      // Stamp each informative plane with copies of its matched filter.
      for (int j : informative) {
        for (int s = 0; s < spec.stamps_per_image; ++s) {
          const int r0 = rng.uniform_int(0, size - 3);
          const int c0 = rng.uniform_int(0, size - 3);
          for (int di = 0; di < 3; ++di) {
            for (int dj = 0; dj < 3; ++dj) {
              image.at(r0 + di, c0 + dj, j) +=
                  static_cast<T>(spec.stamp_amplitude * filters[static_cast<size_t>(j)][static_cast<size_t>(di * 3 + dj)]);
            }
          }
        }
      }
    }
    data.images.push_back(std::move(image));
  }

  std::vector<int64_t> no_groups(static_cast<size_t>(n), -1);
  data.splits = assign_splits(labels, no_groups, spec.fractions, rng);
  data.validate();

  return PlantedDataset<T>{std::move(data), std::move(model), std::move(informative)};
}

namespace {

constexpr char kDatasetMagic[4] = {'C', 'S', 'D', 'S'};

struct ManifestRow {
  std::string filename;
  int label;
  std::string patient;
};

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open labels manifest '" + path + "'");
  std::vector<ManifestRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("filename", 0) == 0) continue;  // header row
    std::stringstream ss(line);
    std::string filename, label_text, patient;
    if (!std::getline(ss, filename, ',') || !std::getline(ss, label_text, ',')) {
      throw FormatError("manifest line " + std::to_string(line_no) + " is missing fields: '" + line + "'");
    }
    std::getline(ss, patient, ',');
    int label = 0;
    try {
      label = std::stoi(label_text);
    } catch (const std::exception&) {
      throw FormatError("manifest line " + std::to_string(line_no) + " has a non-numeric label '" + label_text + "'");
    }
    if (label != 0 && label != 1) {
      throw FormatError("manifest line " + std::to_string(line_no) + " has label " + std::to_string(label) +
                        ", expected 0 or 1");
    }
    rows.push_back({filename, label, patient});
  }
  if (rows.empty()) throw FormatError("labels manifest '" + path + "' lists no samples");
  return rows;
}

// Channel-count normalization: replicate a single plane up, or average
// planes down to one; anything else is a configuration error.
Tensor<float> normalize_channels(const Tensor<float>& image, int target, const std::string& name) {
  const int c = image.extent(2);
  if (c == target) return image;
  const int h = image.extent(0), w = image.extent(1);
  Tensor<float> out(Shape{h, w, target});
  if (c == 1) {
    for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) {
      for (int t = 0; t < target; ++t) out[p * target + t] = image[p];
    }
    return out;
  }
  if (target == 1) {
    for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) {
      float acc = 0.0f;
      for (int ch = 0; ch < c; ++ch) acc += image[p * c + ch];
      out[p] = acc / static_cast<float>(c);
    }
    return out;
  }
  throw ConfigError("image '" + name + "' has " + std::to_string(c) + " channels; cannot map to " +
                    std::to_string(target));
}

}  // namespace

DatasetContainer<float> import_dataset(const std::string& directory, const SplitFractions& fractions, int image_size,
                                       int target_channels, uint64_t seed) {
  fractions.validate();
  if (image_size < 1) throw ConfigError("dataset.image_size must be >= 1");
  if (target_channels < 1) throw ConfigError("dataset.channels must be >= 1");

  const std::filesystem::path dir(directory);
  const auto rows = read_manifest((dir / "labels.csv").string());

  DatasetContainer<float> data;
  data.seed = seed;
  data.provenance = "import " + directory + " seed=" + std::to_string(seed);

  std::map<std::string, int64_t> patient_ids;
  std::map<std::string, int> patient_label;
  std::vector<int64_t> groups;
  for (const auto& row : rows) {
    Tensor<float> image = read_pnm((dir / row.filename).string());
    image = resize_bilinear(image, image_size, image_size);
    image = normalize_channels(image, target_channels, row.filename);
    data.images.push_back(std::move(image));
    data.labels.push_back(row.label);
    if (row.patient.empty()) {
      groups.push_back(-1);
    } else {
      auto [it, fresh] = patient_ids.emplace(row.patient, static_cast<int64_t>(patient_ids.size()));
      groups.push_back(it->second);
      if (fresh) {
        patient_label[row.patient] = row.label;
      } else if (patient_label[row.patient] != row.label) {
        std::cerr << "warning: patient '" << row.patient << "' appears with conflicting labels; keeping all samples\n";
        patient_label[row.patient] = row.label;
      }
    }
  }

  Rng rng(seed);
  data.splits = assign_splits(data.labels, groups, fractions, rng);
  data.validate();
  return data;
}

void save_dataset(const DatasetContainer<float>& data, const std::string& path) {
  data.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");

  io::write_bytes(os, kDatasetMagic, 4);
  io::write_le<uint16_t>(os, kDatasetFormatVersion);

  const Shape shape = data.image_shape();
  std::ostringstream header;
  header << "images " << data.images.size() << "\n";
  header << "shape " << shape[0] << "," << shape[1] << "," << shape[2] << "\n";
  header << "seed " << data.seed << "\n";
  header << "provenance " << io::escape_line(data.provenance) << "\n";
  header << "end\n";
  const std::string header_text = header.str();
  io::write_le<uint32_t>(os, static_cast<uint32_t>(header_text.size()));
  io::write_bytes(os, header_text.data(), header_text.size());

  std::vector<unsigned char> labels(data.labels.begin(), data.labels.end());
  io::write_payload(os, labels.data(), labels.size());
  std::vector<unsigned char> splits(data.splits.size());
  for (size_t i = 0; i < data.splits.size(); ++i) splits[i] = static_cast<unsigned char>(data.splits[i]);
  io::write_payload(os, splits.data(), splits.size());

  std::vector<float> pixels;
  pixels.reserve(static_cast<size_t>(shape.elements()) * data.images.size());
  for (const auto& img : data.images) pixels.insert(pixels.end(), img.raw().begin(), img.raw().end());
  io::write_f32_payload(os, pixels.data(), pixels.size());
  os.flush();
  if (!os) throw IoError("write to '" + path + "' failed");
}

DatasetContainer<float> load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");

  char magic[4];
  io::read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) throw FormatError("not a dataset file (bad magic)");
  const uint16_t version = io::read_le<uint16_t>(is, "version");
  if (version > kDatasetFormatVersion) {
    throw FormatError("dataset format version " + std::to_string(version) + " is newer than supported version " +
                      std::to_string(kDatasetFormatVersion));
  }

  const uint32_t header_len = io::read_le<uint32_t>(is, "header length");
  std::string header_text(header_len, '\0');
  io::read_bytes(is, header_text.data(), header_len, "header");

  DatasetContainer<float> data;
  size_t count = 0;
  Shape shape;
  std::istringstream header(header_text);
  std::string line;
  bool saw_end = false;
  while (std::getline(header, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "images") {
      ls >> count;
    } else if (key == "shape") {
      std::string csv;
      ls >> csv;
      std::vector<int> dims;
      std::stringstream cs(csv);
      std::string item;
      while (std::getline(cs, item, ',')) dims.push_back(std::stoi(item));
      shape = Shape(dims);
    } else if (key == "seed") {
      ls >> data.seed;
    } else if (key == "provenance") {
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
      data.provenance = io::unescape_line(rest);
    } else if (key == "end") {
      saw_end = true;
      break;
    } else {
      throw FormatError("unknown dataset header key '" + key + "'");
    }
  }
  if (!saw_end) throw FormatError("dataset header missing 'end' marker");
  if (count == 0 || shape.rank() != 3) throw FormatError("dataset header is incomplete");

  auto labels = io::read_payload(is, "labels");
  if (labels.size() != count) throw FormatError("dataset label payload has wrong length");
  data.labels.assign(labels.begin(), labels.end());

  auto splits = io::read_payload(is, "splits");
  if (splits.size() != count) throw FormatError("dataset split payload has wrong length");
  data.splits.resize(count);
  for (size_t i = 0; i < count; ++i) {
    if (splits[i] > 2) throw FormatError("dataset split payload has invalid value");
    data.splits[i] = static_cast<Split>(splits[i]);
  }

  const size_t per_image = static_cast<size_t>(shape.elements());
  auto pixels = io::read_f32_payload(is, per_image * count, "image data");
  data.images.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    std::vector<float> img(pixels.begin() + static_cast<std::ptrdiff_t>(i * per_image),
                           pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * per_image));
    data.images.emplace_back(shape, std::move(img));
  }
  data.validate();
  return data;
}

template struct DatasetContainer<float>;
template struct DatasetContainer<double>;
template DatasetContainer<double> DatasetContainer<float>::cast<double>() const;
template DatasetContainer<float> DatasetContainer<double>::cast<float>() const;
template PlantedDataset<float> generate_planted_dataset(const SyntheticSpec&, uint64_t);
template PlantedDataset<double> generate_planted_dataset(const SyntheticSpec&, uint64_t);

}  // namespace cscale
