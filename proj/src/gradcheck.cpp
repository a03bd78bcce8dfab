#include "jfaa/gradcheck.hpp"

#include <algorithm>
#include <random>

#include "jfaa/rng.hpp"

namespace jfaa {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.relative_error);
  return w;
}

double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double denom = std::max({analytic.norm(), numeric.norm(), kNormFloor});
  return (analytic - numeric).norm() / denom;
}

GradCheckReport probe_gradient_check(const ProbeCheckOptions& options) {
  Rng rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto params = init_params<double>(options.probe);
  // Move biases, gains and queries off their initial values so every block has signal.
  params.for_each([&](const std::string&, Mat<double>& m) {
    m = m.unaryExpr([&](double v) { return v + 0.1 * normal(rng); });
  });

  Mat<double> tokens(options.n_tokens, options.probe.d_model);
  for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = normal(rng);
  std::vector<int> segs(static_cast<std::size_t>(options.n_tokens));
  for (std::size_t i = 0; i < segs.size(); ++i) segs[i] = i * 3 >= segs.size() * 2 ? 1 : 0;

  std::uniform_int_distribution<Eigen::Index> pick_verb(0, options.probe.n_verb - 1);
  std::uniform_int_distribution<Eigen::Index> pick_noun(0, options.probe.n_noun - 1);
  std::uniform_int_distribution<Eigen::Index> pick_action(0, options.probe.n_action - 1);
  const TripleLabel label{pick_verb(rng), pick_noun(rng), pick_action(rng)};
  const FocalConfig focal;

  const auto loss_at = [&](const ProbeParameters<double>& p) {
    return total_loss(probe_forward(tokens, segs, p).logits, label, focal).loss;
  };

  const auto fwd = probe_forward(tokens, segs, params);
  const auto loss = total_loss(fwd.logits, label, focal);
  const auto grads = probe_backward(fwd.tape, params, loss.grad);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  auto slots = params.tensors();
  std::size_t k = 0;
  grads.for_each([&](const std::string& name, const Mat<double>& g) {
    Mat<double>& m = *slots[k++].second;
    Eigen::VectorXd analytic = g.reshaped();
    Eigen::VectorXd numeric(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + options.step;
      const double up = loss_at(params);
      m.data()[i] = saved - options.step;
      const double down = loss_at(params);
      m.data()[i] = saved;
      numeric[i] = (up - down) / (2.0 * options.step);
    }
    report.blocks.push_back({name, m.size(), analytic.norm(), numeric.norm(),
                             relative_error(analytic, numeric)});
  });
  return report;
}

GradCheckReport focal_gradient_check(const FocalCheckOptions& options) {
  Rng rng(options.seed);
  std::uniform_real_distribution<double> logit(-5.0, 5.0), unit(0.0, 1.0), gamma(0.0, 3.0);
  std::uniform_int_distribution<Eigen::Index> target(0, options.n_classes - 1);
  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (int t = 0; t < options.trials; ++t) {
    FocalConfig cfg;
    cfg.alpha = unit(rng);
    cfg.gamma = gamma(rng);
    Eigen::VectorXd x(options.n_classes);
    for (auto& v : x) v = logit(rng);
    const auto y = target(rng);
    const auto analytic = sigmoid_focal_loss<double>(x, y, cfg).grad;
    Eigen::VectorXd numeric(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd up = x, down = x;
      up[i] += options.step;
      down[i] -= options.step;
      numeric[i] = (sigmoid_focal_loss<double>(up, y, cfg).loss -
                    sigmoid_focal_loss<double>(down, y, cfg).loss) /
                   (2.0 * options.step);
    }
    report.blocks.push_back({"trial_" + std::to_string(t), x.size(), analytic.norm(),
                             numeric.norm(), relative_error(analytic, numeric)});
  }
  return report;
}

}  // namespace jfaa
