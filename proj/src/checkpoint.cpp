#include "jfaa/checkpoint.hpp"

#include <charconv>
#include <map>
#include <sstream>

namespace jfaa {
namespace {

std::string config_text(const ProbeConfig& c) {
  std::ostringstream os;
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), c.mlp_ratio);
  os << "d_model=" << c.d_model << "\nn_blocks=" << c.n_blocks << "\nn_heads=" << c.n_heads
     << "\nmlp_ratio=" << std::string(buf, res.ptr) << "\nn_verb=" << c.n_verb
     << "\nn_noun=" << c.n_noun << "\nn_action=" << c.n_action << "\nseed=" << c.seed << '\n';
  return os.str();
}

template <class S>
void save_impl(const ProbeParameters<S>& params, const std::filesystem::path& path) {
  TensorFile file;
  file.add(TensorBlock::from_text("config", config_text(params.config)));
  params.for_each([&](const std::string& name, const Mat<S>& m) {
    file.add(TensorBlock::from_matrix(name, m));
  });
  file.save(path);
}

}  // namespace

void save_checkpoint(const ProbeParameters<float>& params, const std::filesystem::path& path) {
  save_impl(params, path);
}

void save_checkpoint(const ProbeParameters<double>& params, const std::filesystem::path& path) {
  save_impl(params, path);
}

ProbeConfig read_checkpoint_config(const TensorFile& file) {
  std::map<std::string, std::string> kv;
  std::istringstream in(file.at("config").to_text());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("checkpoint config lacks ") + key);
    return it->second;
  };
  const auto num = [&](const char* key, auto& out) {
    const auto& s = get(key);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw DataError(std::string("checkpoint config: bad value for ") + key);
  };
  ProbeConfig c;
  num("d_model", c.d_model);
  num("n_blocks", c.n_blocks);
  num("n_heads", c.n_heads);
  num("mlp_ratio", c.mlp_ratio);
  num("n_verb", c.n_verb);
  num("n_noun", c.n_noun);
  num("n_action", c.n_action);
  num("seed", c.seed);
  c.validate();
  return c;
}

void write_score_file(const std::vector<ScoreSet>& scores, const std::filesystem::path& path) {
  const auto n = static_cast<Eigen::Index>(scores.size());
  const Eigen::Index nv = n ? scores.front().verb_scores.size() : 0;
  const Eigen::Index nn = n ? scores.front().noun_scores.size() : 0;
  Eigen::MatrixXd verb(n, nv), noun(n, nn);
  std::string ids;
  std::vector<std::int64_t> offsets{0}, pairs;
  std::vector<double> action;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = scores[static_cast<std::size_t>(i)];
    if (s.verb_scores.size() != nv || s.noun_scores.size() != nn)
      throw DataError("write_score_file: ragged score rows");
    if (s.narration_id.find('\n') != std::string::npos)
      throw DataError("write_score_file: newline in narration id");
    ids += s.narration_id + '\n';
    verb.row(i) = s.verb_scores.transpose();
    noun.row(i) = s.noun_scores.transpose();
    for (const auto& [pair, v] : s.action_scores) {
      pairs.push_back(pair.first);
      pairs.push_back(pair.second);
      action.push_back(v);
    }
    offsets.push_back(static_cast<std::int64_t>(action.size()));
  }
  TensorFile file;
  file.add(TensorBlock::from_text("narration_ids", ids));
  file.add(TensorBlock::from_matrix("verb", verb));
  file.add(TensorBlock::from_matrix("noun", noun));
  file.add(TensorBlock::from_ints("action_offsets", offsets));
  file.add(TensorBlock::from_ints("action_pairs", pairs, 2));
  file.add(TensorBlock::from_matrix(
      "action_scores", Eigen::Map<const Eigen::VectorXd>(action.data(),
                                                         static_cast<Eigen::Index>(action.size()))));
  file.save(path);
}

std::vector<ScoreSet> read_score_file(const std::filesystem::path& path) {
  const auto file = TensorFile::load(path);
  std::vector<std::string> ids;
  {
    std::istringstream in(file.at("narration_ids").to_text());
    std::string line;
    while (std::getline(in, line)) ids.push_back(line);
  }
  const auto verb = file.at("verb").to_matrix<double>();
  const auto noun = file.at("noun").to_matrix<double>();
  const auto offsets = file.at("action_offsets").to_ints();
  const auto pairs = file.at("action_pairs").to_ints();
  const auto action = file.at("action_scores").to_matrix<double>();
  const auto n = ids.size();
  if (static_cast<std::size_t>(verb.rows()) != n || static_cast<std::size_t>(noun.rows()) != n ||
      offsets.size() != n + 1 || pairs.size() != 2 * static_cast<std::size_t>(action.size()) ||
      offsets.back() != action.size())
    throw DataError(path.string() + ": inconsistent score file");
  std::vector<ScoreSet> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = out[i];
    s.narration_id = ids[i];
    s.verb_scores = verb.row(static_cast<Eigen::Index>(i)).transpose();
    s.noun_scores = noun.row(static_cast<Eigen::Index>(i)).transpose();
    for (auto k = offsets[i]; k < offsets[i + 1]; ++k) {
      const VerbNounPair p{static_cast<int>(pairs[2 * k]), static_cast<int>(pairs[2 * k + 1])};
      s.action_scores.emplace(p, action.data()[k]);
    }
  }
  return out;
}

}  // namespace jfaa
