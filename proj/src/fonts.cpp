#include "robustlab/fonts.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "robustlab/ops.hpp"
#include "robustlab/rng.hpp"
#include "robustlab/serialize.hpp"

namespace robustlab::fonts {

bool PoseRanges::contains(const LatentPose& p) const {
  const auto b = bounds();
  const auto a = p.as_array();
  for (int i = 0; i < 6; ++i)
    if (a[static_cast<size_t>(i)] < b[static_cast<size_t>(i)].first || a[static_cast<size_t>(i)] > b[static_cast<size_t>(i)].second)
      return false;
  return true;
}

LatentPose PoseRanges::clamp(const LatentPose& p) const {
  const auto b = bounds();
  auto a = p.as_array();
  for (int i = 0; i < 6; ++i)
    a[static_cast<size_t>(i)] = std::min(b[static_cast<size_t>(i)].second, std::max(b[static_cast<size_t>(i)].first, a[static_cast<size_t>(i)]));
  return LatentPose::from_array(a);
}

LatentBox PoseRanges::as_box() const {
  LatentBox box;
  for (const auto& [lo, hi] : bounds()) {
    box.lo.push_back(lo);
    box.hi.push_back(hi);
  }
  return box;
}

std::array<double, 6> compose_affine(const LatentPose& pose) {
  for (double v : pose.as_array())
    if (!std::isfinite(v)) throw std::invalid_argument("compose_affine: non-finite pose component");
  std::array<double, 6> m;
  pose_matrix_entries(pose.t1, pose.t2, pose.lambda1, pose.lambda2, pose.s, pose.r, m.data());
  return m;
}

Tensor true_decoder(const GlyphPrototype& proto, const LatentPose& pose) {
  const auto a = pose.as_array();
  Tensor pose_t = Tensor::from({1, 6}, {static_cast<real_t>(a[0]), static_cast<real_t>(a[1]),
                                        static_cast<real_t>(a[2]), static_cast<real_t>(a[3]),
                                        static_cast<real_t>(a[4]), static_cast<real_t>(a[5])});
  return reshape(decode_pose_batch({&proto}, pose_t),
                 {proto.bitmap.size(0), proto.bitmap.size(1), proto.bitmap.size(2)});
}

Tensor decode_pose_batch(const std::vector<const GlyphPrototype*>& protos, const Tensor& poses) {
  if (poses.ndim() != 2 || poses.size(1) != 6)
    throw std::invalid_argument("decode_pose_batch: poses must be [B,6], got " + shape_str(poses.shape()));
  const int64_t B = poses.size(0);
  if (static_cast<int64_t>(protos.size()) != B)
    throw std::invalid_argument("decode_pose_batch: prototype count does not match batch");
  const Shape img = protos[0]->bitmap.shape();  // [1,H,W]
  Tensor canvas = Tensor::zeros({B, img[0], img[1], img[2]});
  for (int64_t b = 0; b < B; ++b) {
    if (protos[static_cast<size_t>(b)]->bitmap.shape() != img)
      throw std::invalid_argument("decode_pose_batch: mixed prototype extents");
    std::copy(protos[static_cast<size_t>(b)]->bitmap.data().begin(), protos[static_cast<size_t>(b)]->bitmap.data().end(),
              canvas.data().begin() + b * img[0] * img[1] * img[2]);
  }
  Tensor theta = pose_matrix(poses);
  return clamp_op(affine_warp(canvas, theta), real_t(0), real_t(1));
}

DecoderRef true_decoder_ref(std::vector<const GlyphPrototype*> protos, const PoseRanges& ranges) {
  DecoderRef ref;
  ref.latent_dim = 6;
  ref.box = ranges.as_box();
  ref.image_shape = protos.empty() ? Shape{1, 28, 28} : protos[0]->bitmap.shape();
  ref.decode = [protos = std::move(protos)](const Tensor& z) { return decode_pose_batch(protos, z); };
  return ref;
}

// ---- dataset -------------------------------------------------------------------

Tensor SyntheticDataset::image(int64_t i) const {
  const int64_t per = images.size(1) * images.size(2) * images.size(3);
  Tensor out = Tensor::zeros({images.size(1), images.size(2), images.size(3)});
  std::copy(images.data().begin() + i * per, images.data().begin() + (i + 1) * per, out.data().begin());
  return out;
}

SyntheticDataset SyntheticDataset::slice(int64_t offset, int64_t count) const {
  if (offset < 0 || count < 0 || offset + count > size())
    throw std::invalid_argument("dataset slice out of range");
  SyntheticDataset out;
  out.seed = seed;
  out.image_size = image_size;
  const int64_t per = images.size(1) * images.size(2) * images.size(3);
  out.images = Tensor::zeros({count, images.size(1), images.size(2), images.size(3)});
  std::copy(images.data().begin() + offset * per, images.data().begin() + (offset + count) * per,
            out.images.data().begin());
  out.labels.assign(labels.begin() + offset, labels.begin() + offset + count);
  out.poses.assign(poses.begin() + offset, poses.begin() + offset + count);
  out.prototype_indices.assign(prototype_indices.begin() + offset, prototype_indices.begin() + offset + count);
  return out;
}

SyntheticDataset generate(const std::vector<GlyphPrototype>& prototypes, int64_t n_per_class, uint64_t seed,
                          const PoseRanges& ranges) {
  if (prototypes.empty()) throw std::invalid_argument("generate: empty prototype set");
  std::vector<std::vector<int64_t>> by_class(10);
  for (size_t i = 0; i < prototypes.size(); ++i)
    by_class[static_cast<size_t>(prototypes[i].class_id)].push_back(static_cast<int64_t>(i));
  for (int cls = 0; cls < 10; ++cls)
    if (by_class[static_cast<size_t>(cls)].empty())
      throw std::invalid_argument("generate: no prototype for class " + std::to_string(cls));

  const int64_t N = n_per_class * 10;
  const int64_t H = prototypes[0].bitmap.size(1), W = prototypes[0].bitmap.size(2);
  SyntheticDataset ds;
  ds.seed = seed;
  ds.image_size = H;
  ds.images = Tensor::zeros({N, 1, H, W});
  ds.labels.resize(static_cast<size_t>(N));
  ds.poses.resize(static_cast<size_t>(N));
  ds.prototype_indices.resize(static_cast<size_t>(N));

  const auto bounds = ranges.bounds();
  for (int64_t i = 0; i < N; ++i) {
    const int64_t cls = i % 10, j = i / 10;
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(cls), static_cast<uint64_t>(j)));
    const auto& candidates = by_class[static_cast<size_t>(cls)];
    const int64_t proto_idx = candidates[rng.randint(candidates.size())];
    std::array<double, 6> a;
    for (int k = 0; k < 6; ++k)
      a[static_cast<size_t>(k)] = rng.uniform(bounds[static_cast<size_t>(k)].first, bounds[static_cast<size_t>(k)].second);
    const LatentPose pose = LatentPose::from_array(a);
    Tensor img = true_decoder(prototypes[static_cast<size_t>(proto_idx)], pose);
    std::copy(img.data().begin(), img.data().end(), ds.images.data().begin() + i * H * W);
    ds.labels[static_cast<size_t>(i)] = cls;
    ds.poses[static_cast<size_t>(i)] = pose;
    ds.prototype_indices[static_cast<size_t>(i)] = proto_idx;
  }
  return ds;
}

void save_dataset(const std::string& path, const SyntheticDataset& ds) {
  nlohmann::json meta;
  meta["type"] = "fonts_dataset";
  meta["seed"] = ds.seed;
  meta["image_size"] = ds.image_size;
  meta["labels"] = ds.labels;
  meta["prototype_indices"] = ds.prototype_indices;
  nlohmann::json poses = nlohmann::json::array();
  for (const LatentPose& p : ds.poses) poses.push_back(p.as_array());
  meta["poses"] = poses;

  NamedBlock images;
  images.name = "images";
  images.shape = ds.images.shape();
  images.data.assign(ds.images.data().begin(), ds.images.data().end());
  write_container(path, meta.dump(), {images});
}

SyntheticDataset load_dataset(const std::string& path) {
  Container c = read_container(path);
  nlohmann::json meta = nlohmann::json::parse(c.metadata_json);
  if (meta.value("type", "") != "fonts_dataset")
    throw std::runtime_error("load_dataset: '" + path + "' is not a dataset container");
  SyntheticDataset ds;
  ds.seed = meta.at("seed");
  ds.image_size = meta.at("image_size");
  ds.labels = meta.at("labels").get<std::vector<int64_t>>();
  ds.prototype_indices = meta.at("prototype_indices").get<std::vector<int64_t>>();
  for (const auto& jp : meta.at("poses")) ds.poses.push_back(LatentPose::from_array(jp.get<std::array<double, 6>>()));
  const NamedBlock& blk = c.block("images");
  std::vector<real_t> data(blk.data.begin(), blk.data.end());
  ds.images = Tensor::from(blk.shape, std::move(data));
  return ds;
}

ManifoldResource true_manifold_resource(const SyntheticDataset& ds, const std::vector<GlyphPrototype>& protos,
                                        const PoseRanges& ranges) {
  ManifoldResource res;
  res.latent_dim = 6;
  res.description = "true";
  res.for_examples = [&ds, &protos, ranges](const std::vector<int64_t>& ids) {
    std::vector<const GlyphPrototype*> rows;
    Tensor z0 = Tensor::zeros({static_cast<int64_t>(ids.size()), 6});
    for (size_t i = 0; i < ids.size(); ++i) {
      const int64_t id = ids[i];
      rows.push_back(&protos[static_cast<size_t>(ds.prototype_indices[static_cast<size_t>(id)])]);
      const auto a = ds.poses[static_cast<size_t>(id)].as_array();
      for (int k = 0; k < 6; ++k) z0.at(static_cast<int64_t>(i) * 6 + k) = static_cast<real_t>(a[static_cast<size_t>(k)]);
    }
    return std::make_pair(true_decoder_ref(std::move(rows), ranges), z0);
  };
  return res;
}

// ---- prototype import ------------------------------------------------------------

namespace {

Tensor read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("pgm: cannot open '" + path + "'");
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P2") throw std::runtime_error("pgm: '" + path + "' is not an 8-bit grayscale PGM");
  auto next_token = [&is, &path]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("pgm: truncated header in '" + path + "'");
  };
  const int64_t w = std::stoll(next_token());
  const int64_t h = std::stoll(next_token());
  const int64_t maxval = std::stoll(next_token());
  if (maxval <= 0 || maxval > 255) throw std::runtime_error("pgm: only 8-bit images supported in '" + path + "'");
  Tensor img = Tensor::zeros({1, h, w});
  if (magic == "P5") {
    is.get();  // single whitespace after maxval
    std::vector<unsigned char> buf(static_cast<size_t>(w * h));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw std::runtime_error("pgm: truncated pixel data in '" + path + "'");
    for (int64_t i = 0; i < w * h; ++i) img.at(i) = static_cast<real_t>(buf[static_cast<size_t>(i)]) / static_cast<real_t>(maxval);
  } else {
    for (int64_t i = 0; i < w * h; ++i) {
      const int64_t v = std::stoll(next_token());
      img.at(i) = static_cast<real_t>(v) / static_cast<real_t>(maxval);
    }
  }
  return img;
}

}  // namespace

std::vector<GlyphPrototype> import_prototypes(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<GlyphPrototype> out;
  for (int64_t cls = 0; cls < 10; ++cls) {
    fs::path sub = fs::path(dir) / std::to_string(cls);
    if (!fs::exists(sub)) sub = fs::path(dir) / std::string(1, static_cast<char>('A' + cls));
    if (!fs::exists(sub)) continue;
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(sub))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    int64_t font_id = 0;
    for (const std::string& f : files) out.push_back({cls, font_id++, read_pgm(f)});
  }
  if (out.empty()) throw std::runtime_error("import_prototypes: no per-class PGM files under '" + dir + "'");
  return out;
}

}  // namespace robustlab::fonts
