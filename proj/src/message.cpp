#include "hgamp/message.hpp"

#include <stdexcept>

namespace hgamp {

const char* to_string(Variant v) {
  return v == Variant::max_sum ? "max-sum" : "sum-product";
}

GaussianEvidence GaussianEvidence::flat_evidence(std::size_t dim) {
  GaussianEvidence e;
  const auto d = static_cast<Eigen::Index>(dim);
  e.mean = Eigen::VectorXd::Zero(d);
  e.cov = Eigen::MatrixXd::Zero(d, d);
  e.flat = true;
  return e;
}

ContinuousMessage ContinuousMessage::flat(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d), {}};
}

ContinuousMessage ContinuousMessage::gaussian(const Eigen::VectorXd& mean,
                                              const Eigen::MatrixXd& cov) {
  ContinuousMessage m;
  m.precision = cov.inverse();
  m.eta = m.precision * mean;
  return m;
}

bool ContinuousMessage::is_flat() const {
  return terms.empty() && eta.isZero(0.0) && precision.isZero(0.0);
}

double ContinuousMessage::evaluate(const Eigen::VectorXd& x) const {
  double v = eta.dot(x) - 0.5 * x.dot(precision * x);
  for (const auto& t : terms) v += t->log_value(x);
  return v;
}

void accumulate(Message& a, const Message& b) {
  if (a.index() != b.index()) throw std::invalid_argument("accumulate: message kinds differ");
  if (auto* ta = std::get_if<TableMessage>(&a)) {
    const auto& tb = std::get<TableMessage>(b);
    if (ta->values.size() != tb.values.size()) {
      throw std::invalid_argument("accumulate: table sizes differ");
    }
    ta->values += tb.values;
    return;
  }
  auto& ca = std::get<ContinuousMessage>(a);
  const auto& cb = std::get<ContinuousMessage>(b);
  if (ca.eta.size() != cb.eta.size()) throw std::invalid_argument("accumulate: dims differ");
  ca.eta += cb.eta;
  ca.precision += cb.precision;
  ca.terms.insert(ca.terms.end(), cb.terms.begin(), cb.terms.end());
}

void normalize(Message& m) {
  if (auto* t = std::get_if<TableMessage>(&m)) {
    if (t->values.size() > 0) t->values.array() -= t->values.maxCoeff();
  }
}

double distance_up_to_constant(const Message& a, const Message& b) {
  if (a.index() != b.index()) throw std::invalid_argument("distance: message kinds differ");
  if (const auto* ta = std::get_if<TableMessage>(&a)) {
    const Eigen::VectorXd d = ta->values - std::get<TableMessage>(b).values;
    if (d.size() == 0) return 0.0;
    return 0.5 * (d.maxCoeff() - d.minCoeff());
  }
  const auto& ca = std::get<ContinuousMessage>(a);
  const auto& cb = std::get<ContinuousMessage>(b);
  return std::max((ca.eta - cb.eta).cwiseAbs().maxCoeff(),
                  (ca.precision - cb.precision).cwiseAbs().maxCoeff());
}

}  // namespace hgamp
