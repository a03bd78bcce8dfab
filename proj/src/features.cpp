#include "jfaa/features.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include "jfaa/rng.hpp"
#include "jfaa/tensor_file.hpp"

namespace jfaa {
namespace {

constexpr std::uint64_t kVerbTag = 0x7665726220ULL;
constexpr std::uint64_t kNounTag = 0x6e6f756e20ULL;
constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;

Eigen::VectorXd gaussian_vector(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace

void FeatureSequence::validate() const {
  if (observed_tokens.rows() < 1) throw DataError(narration_id + ": no observed tokens");
  if (observed_tokens.cols() < 1) throw DataError(narration_id + ": zero feature width");
  if (predicted_tokens.rows() > 0 && predicted_tokens.cols() != observed_tokens.cols())
    throw DataError(narration_id + ": observed/predicted width mismatch");
  if (!observed_tokens.allFinite() || !predicted_tokens.allFinite())
    throw DataError(narration_id + ": non-finite feature values");
}

TokenMatrix assemble_tokens(const FeatureSequence& fs) {
  if (fs.n_obs() < 1) throw DataError(fs.narration_id + ": no observed tokens");
  if (fs.n_pred() > 0 && fs.predicted_tokens.cols() != fs.d_model())
    throw DataError(fs.narration_id + ": observed/predicted width mismatch");
  TokenMatrix out(fs.n_obs() + fs.n_pred(), fs.d_model());
  out.topRows(fs.n_obs()) = fs.observed_tokens;
  if (fs.n_pred() > 0) out.bottomRows(fs.n_pred()) = fs.predicted_tokens;
  return out;
}

std::vector<int> segment_ids(const FeatureSequence& fs) {
  std::vector<int> ids(static_cast<std::size_t>(fs.n_obs() + fs.n_pred()), 1);
  std::fill_n(ids.begin(), fs.n_obs(), 0);
  return ids;
}

void write_features(const FeatureSequence& fs, const std::filesystem::path& path) {
  fs.validate();
  std::vector<unsigned char> bytes(FeatureStoreHeader::kMagic, FeatureStoreHeader::kMagic + 8);
  le::put_u32(bytes, FeatureStoreHeader::kVersion);
  le::put_u32(bytes, static_cast<std::uint32_t>(fs.d_model()));
  le::put_u32(bytes, static_cast<std::uint32_t>(fs.n_obs()));
  le::put_u32(bytes, static_cast<std::uint32_t>(fs.n_pred()));
  const auto tokens = assemble_tokens(fs);
  bytes.reserve(bytes.size() + static_cast<std::size_t>(tokens.size()) * 4);
  for (Eigen::Index i = 0; i < tokens.size(); ++i) le::put<float>(bytes, tokens.data()[i]);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("feature file not found: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto where = path.string();
  if (bytes.size() < FeatureStoreHeader::kSize) throw DataError(where + ": truncated header");
  if (std::memcmp(bytes.data(), FeatureStoreHeader::kMagic, 8) != 0)
    throw DataError(where + ": bad magic");

  FeatureStoreHeader h;
  h.version = le::get_u32(bytes.data() + 8);
  h.d_model = le::get_u32(bytes.data() + 12);
  h.n_obs = le::get_u32(bytes.data() + 16);
  h.n_pred = le::get_u32(bytes.data() + 20);
  if (h.version != FeatureStoreHeader::kVersion)
    throw DataError(where + ": unsupported version " + std::to_string(h.version));
  if (h.n_obs == 0) throw DataError(where + ": n_obs must be at least 1");
  if (h.d_model == 0) throw DataError(where + ": d_model must be positive");

  const std::uint64_t rows = std::uint64_t{h.n_obs} + h.n_pred;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / 4 / h.d_model;
  if (rows > limit) throw DataError(where + ": dimension overflow");
  const std::uint64_t payload = rows * h.d_model * 4;
  const std::uint64_t available = bytes.size() - FeatureStoreHeader::kSize;
  if (available < payload) throw DataError(where + ": truncated payload");
  if (available > payload) throw DataError(where + ": trailing bytes after payload");

  FeatureSequence fs;
  fs.narration_id = path.stem().string();
  fs.observed_tokens.resize(h.n_obs, h.d_model);
  fs.predicted_tokens.resize(h.n_pred, h.d_model);
  const unsigned char* p = bytes.data() + FeatureStoreHeader::kSize;
  for (Eigen::Index i = 0; i < fs.observed_tokens.size(); ++i, p += 4)
    fs.observed_tokens.data()[i] = le::get<float>(p);
  for (Eigen::Index i = 0; i < fs.predicted_tokens.size(); ++i, p += 4)
    fs.predicted_tokens.data()[i] = le::get<float>(p);
  return fs;
}

Eigen::VectorXf class_anchor(int verb, int noun, Eigen::Index d_model, std::uint64_t seed) {
  Rng verb_rng(derive_seed(seed, kVerbTag, static_cast<std::uint64_t>(verb)));
  Rng noun_rng(derive_seed(seed, kNounTag, static_cast<std::uint64_t>(noun)));
  Eigen::VectorXd a = gaussian_vector(d_model, verb_rng).normalized() +
                      gaussian_vector(d_model, noun_rng).normalized();
  const double norm = a.norm();
  // Antipodal verb/noun directions are measure-zero; fall back to the verb direction.
  if (norm < 1e-12) a = gaussian_vector(d_model, verb_rng);
  return (SynthConstants::kAnchorNorm * a.normalized()).cast<float>();
}

FeatureSequence synth_features(const std::string& narration_id, std::pair<int, int> label,
                               Eigen::Index d_model, Eigen::Index n_obs, Eigen::Index n_pred,
                               std::uint64_t seed, double separability,
                               std::uint64_t noise_variant) {
  if (d_model < 1 || n_obs < 1 || n_pred < 0)
    throw ConfigError("synth_features: dimensions must be positive");
  const Eigen::VectorXd anchor =
      class_anchor(label.first, label.second, d_model, seed).cast<double>();
  Rng rng(derive_seed(seed, kNoiseTag, hash_string(narration_id), noise_variant));
  const double per_entry = SynthConstants::kNoiseScale / std::sqrt(static_cast<double>(d_model));
  const double clip = SynthConstants::kNoiseClip * SynthConstants::kNoiseScale;

  TokenMatrix tokens(n_obs + n_pred, d_model);
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
    Eigen::VectorXd noise = per_entry * gaussian_vector(d_model, rng);
    const double n = noise.norm();
    if (n > clip) noise *= clip / n;
    tokens.row(r) = (noise + separability * anchor).cast<float>().transpose();
  }
  FeatureSequence fs;
  fs.narration_id = narration_id;
  fs.observed_tokens = tokens.topRows(n_obs);
  fs.predicted_tokens = tokens.bottomRows(n_pred);
  return fs;
}

FeatureProvider make_synthetic_provider(SynthProviderOptions options) {
  return [options](const AnnotationRecord& record, const ClipSpec& clip) {
    std::uint64_t variant = 0;
    if (options.vary_with_clip && !clip.frame_indices.empty())
      variant = static_cast<std::uint64_t>(clip.frame_indices.front()) + 1;
    return synth_features(record.narration_id, {record.verb_class, record.noun_class},
                          options.d_model, options.n_obs, options.n_pred, options.seed,
                          options.separability, variant);
  };
}

FeatureProvider make_file_provider(std::filesystem::path dir) {
  return [dir = std::move(dir)](const AnnotationRecord& record, const ClipSpec&) {
    auto fs = read_features(dir / (record.narration_id + ".feat"));
    fs.narration_id = record.narration_id;
    return fs;
  };
}

}  // namespace jfaa
