#include "advlens/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "advlens/error.hpp"
#include "binary_io.hpp"
#include "random.hpp"

namespace advlens {

void LabeledDataset::validate() const {
  if (images.rank() < 2 || images.batch() != labels.size()) {
    throw ConfigError("dataset has " + std::to_string(images.batch()) + " images but " +
                      std::to_string(labels.size()) + " labels");
  }
  for (double v : images.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("dataset pixel outside [0,1]");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ConfigError("label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.images = gather(images, rows);
  out.num_classes = num_classes;
  out.labels.reserve(rows.size());
  for (auto r : rows) out.labels.push_back(labels.at(r));
  return out;
}

namespace {

std::vector<double> gaussian_blur(const std::vector<double>& img, std::size_t h, std::size_t w, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(2.5 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  auto blur_axis = [&](const std::vector<double>& src, bool horizontal) {
    std::vector<double> dst(src.size(), 0.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0, norm = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const long yy = static_cast<long>(y) + (horizontal ? 0 : k);
          const long xx = static_cast<long>(x) + (horizontal ? k : 0);
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
          acc += kernel[k + radius] * src[yy * w + xx];
          norm += kernel[k + radius];
        }
        dst[y * w + x] = acc / norm;
      }
    }
    return dst;
  };
  return blur_axis(blur_axis(img, true), false);
}

}  // namespace

LabeledDataset make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.num_classes < 2 || spec.channels == 0 || spec.height == 0 || spec.width == 0) {
    throw ConfigError("synthetic dataset needs >= 2 classes and positive image dimensions");
  }
  const std::size_t plane = spec.height * spec.width;
  const std::size_t dim = spec.channels * plane;

  std::mt19937_64 proto_rng(spec.prototype_seed);
  std::vector<std::vector<double>> prototypes(spec.num_classes, std::vector<double>(dim, 0.0));
  for (auto& proto : prototypes) {
    for (std::size_t c = 0; c < spec.channels; ++c) {
      for (std::size_t b = 0; b < spec.blobs_per_class; ++b) {
        const double cy = rnd::uniform(proto_rng, 0.0, static_cast<double>(spec.height));
        const double cx = rnd::uniform(proto_rng, 0.0, static_cast<double>(spec.width));
        const double s = rnd::uniform(proto_rng, 0.8, 2.0);
        const double amp = rnd::uniform(proto_rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        for (std::size_t y = 0; y < spec.height; ++y) {
          for (std::size_t x = 0; x < spec.width; ++x) {
            const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
            proto[c * plane + y * spec.width + x] += amp * std::exp(-(dx * dx + dy * dy) / (2 * s * s));
          }
        }
      }
    }
    double peak = 0.0;
    for (double v : proto) peak = std::max(peak, std::abs(v));
    if (peak > 0.0) {
      for (double& v : proto) v *= spec.signal / peak;
    }
  }

  // Blurring shrinks the variance; rescale so per-pixel std equals spec.noise.
  double blur_gain = 1.0;
  if (spec.noise_smoothing > 0.0) {
    std::mt19937_64 probe(0);
    double ss = 0.0;
    std::size_t count = 0;
    for (int rep = 0; rep < 64; ++rep) {
      std::vector<double> n(plane);
      for (double& v : n) v = rnd::normal(probe);
      for (double v : gaussian_blur(n, spec.height, spec.width, spec.noise_smoothing)) {
        ss += v * v;
        ++count;
      }
    }
    blur_gain = 1.0 / std::sqrt(ss / static_cast<double>(count));
  }

  const std::size_t n = spec.num_classes * spec.samples_per_class;
  LabeledDataset data;
  data.num_classes = spec.num_classes;
  data.images = Tensor({n, spec.channels, spec.height, spec.width});
  data.labels.resize(n);
  std::mt19937_64 rng(spec.sample_seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % spec.num_classes);
    data.labels[i] = label;
    auto img = data.images.sample(i);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      std::vector<double> noise(plane);
      for (double& v : noise) v = rnd::normal(rng);
      noise = gaussian_blur(noise, spec.height, spec.width, spec.noise_smoothing);
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = 0.5 + prototypes[label][c * plane + p] + spec.noise * blur_gain * noise[p];
        img[c * plane + p] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return data;
}

namespace {

// Largest-remainder allocation of `total` across classes in proportion to
// `counts`, never exceeding `capacity`.
std::vector<std::size_t> allocate(std::size_t total, const std::vector<std::size_t>& counts, std::size_t n,
                                  const std::vector<std::size_t>& capacity) {
  const std::size_t k = counts.size();
  std::vector<std::size_t> quota(k);
  std::vector<double> remainder(k);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double share = static_cast<double>(total) * counts[c] / static_cast<double>(n);
    quota[c] = std::min(static_cast<std::size_t>(std::floor(share)), capacity[c]);
    remainder[c] = share - std::floor(share);
    assigned += quota[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  while (assigned < total) {
    bool progressed = false;
    for (auto c : order) {
      if (assigned == total) break;
      if (quota[c] < capacity[c]) {
        ++quota[c];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) throw ConfigError("stratified split: not enough samples to fill the requested sizes");
  }
  return quota;
}

}  // namespace

Split stratified_split(const LabeledDataset& data, std::uint64_t seed, std::size_t n_validation,
                       std::size_t n_test) {
  const std::size_t n = data.size();
  if (n_validation + n_test > n) {
    throw ConfigError("split sizes " + std::to_string(n_validation) + "+" + std::to_string(n_test) +
                      " exceed dataset size " + std::to_string(n));
  }
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < n; ++i) by_class.at(static_cast<std::size_t>(data.labels[i])).push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> counts(data.num_classes);
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    rnd::shuffle(by_class[c], rng);
    counts[c] = by_class[c].size();
  }
  const auto val_quota = allocate(n_validation, counts, n, counts);
  std::vector<std::size_t> left(data.num_classes);
  for (std::size_t c = 0; c < data.num_classes; ++c) left[c] = counts[c] - val_quota[c];
  const auto test_quota = allocate(n_test, counts, n, left);

  Split split;
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    const auto& idx = by_class[c];
    split.validation_index.insert(split.validation_index.end(), idx.begin(), idx.begin() + val_quota[c]);
    split.test_index.insert(split.test_index.end(), idx.begin() + val_quota[c],
                            idx.begin() + val_quota[c] + test_quota[c]);
  }
  rnd::shuffle(split.validation_index, rng);
  rnd::shuffle(split.test_index, rng);
  split.validation = data.subset(split.validation_index);
  split.test = data.subset(split.test_index);
  return split;
}

namespace {
constexpr std::string_view kDatasetMagic = "ADVDATA1";
}

void save_dataset(const LabeledDataset& data, const std::filesystem::path& path) {
  auto os = io::open_out(path);
  os.write(kDatasetMagic.data(), kDatasetMagic.size());
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(data.num_classes));
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(data.images.rank()));
  for (auto d : data.images.shape()) io::write<std::uint64_t>(os, d);
  std::vector<std::int32_t> labels(data.labels.begin(), data.labels.end());
  io::write_array(os, labels);
  io::write_array(os, data.images.values());
  if (!os) throw FormatError("failed writing '" + path.string() + "'");
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kDatasetMagic, path);
  LabeledDataset data;
  data.num_classes = io::read<std::uint32_t>(is);
  const auto rank = io::read<std::uint32_t>(is);
  if (rank < 2 || rank > 8) throw FormatError("implausible dataset rank in '" + path.string() + "'");
  Shape shape(rank);
  for (auto& d : shape) d = io::read<std::uint64_t>(is);
  std::vector<std::int32_t> labels(shape[0]);
  io::read_array(is, labels);
  std::vector<double> pixels(shape_size(shape));
  io::read_array(is, pixels);
  data.labels.assign(labels.begin(), labels.end());
  data.images = Tensor(std::move(shape), std::move(pixels));
  data.validate();
  return data;
}

}  // namespace advlens
