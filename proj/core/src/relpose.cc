#include "instavo/relpose.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace instavo {

std::string_view ToString(RelPoseStatus status) {
  switch (status) {
    case RelPoseStatus::kConverged: return "Converged";
    case RelPoseStatus::kDegenerate: return "Degenerate";
    case RelPoseStatus::kTooFewInliers: return "TooFewInliers";
  }
  return "Unknown";
}

Vec27 LiftedPose(const Rotation& rotation, const Vec3& u) {
  const Eigen::Map<const Eigen::Matrix<double, 9, 1>> r(rotation.matrix().data());
  Vec27 x;
  for (int k = 0; k < 3; ++k) x.segment<9>(9 * k) = u[k] * r;
  return x;
}

Vec27 DataMatrix::PairVector(const BearingPair& pair) {
  // u . ((R f) x f') = sum_{k,a,c} u_k R_ac f_c (e_a x f')_k, and R_ac sits at
  // index a + 3c of the column-major vec(R).
  const Vec3& f = pair.f.vector();
  const Vec3& fp = pair.f_prime.vector();
  Vec27 c;
  for (int a = 0; a < 3; ++a) {
    const Vec3 ea_x_fp = Vec3::Unit(a).cross(fp);
    for (int col = 0; col < 3; ++col) {
      for (int k = 0; k < 3; ++k) {
        c[(a + 3 * col) + 9 * k] = f[col] * ea_x_fp[k];
      }
    }
  }
  return c;
}

DataMatrix DataMatrix::Build(std::span<const BearingPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("BuildDataMatrix: no bearing pairs");
  DataMatrix out;
  for (const BearingPair& pair : pairs) {
    const Vec27 c = PairVector(pair);
    out.matrix_.selfadjointView<Eigen::Lower>().rankUpdate(c);
  }
  out.matrix_.triangularView<Eigen::StrictlyUpper>() =
      out.matrix_.triangularView<Eigen::StrictlyLower>().transpose();
  out.n_pairs_ = static_cast<int>(pairs.size());
  return out;
}

DataMatrix& DataMatrix::operator+=(const DataMatrix& other) {
  matrix_ += other.matrix_;
  n_pairs_ += other.n_pairs_;
  return *this;
}

Mat3 EpipolarNormalCovariance(const Rotation& rotation,
                              std::span<const BearingPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("EpipolarNormalCovariance: no bearing pairs");
  Mat3 m = Mat3::Zero();
  for (const BearingPair& pair : pairs) {
    const Vec3 normal = (rotation * pair.f.vector()).cross(pair.f_prime.vector());
    m.noalias() += normal * normal.transpose();
  }
  return m;
}

DirectionEstimate TranslationFromRotation(const Mat3& m) {
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (m + m.transpose()));
  DirectionEstimate out;
  out.min_eigenvalue = eig.eigenvalues()[0];
  out.eigen_gap = eig.eigenvalues()[1] - eig.eigenvalues()[0];
  const double trace = m.trace();
  out.degenerate = !(out.eigen_gap >= 1e-9 * trace) || !(trace > 0.0);
  out.direction = UnitDirection::FromVector(eig.eigenvectors().col(0));
  return out;
}

double FunctionalValue(const DataMatrix& c, const Rotation& rotation,
                       const UnitDirection& direction) {
  const Vec27 x = LiftedPose(rotation, direction.vector());
  return std::max(0.0, x.dot(c.matrix() * x));
}

Vec5 FunctionalGradient(const DataMatrix& c, const Rotation& rotation,
                        const UnitDirection& direction) {
  const Vec3 u = direction.vector();
  const Vec27 x = LiftedPose(rotation, u);
  const Vec27 g = 2.0 * (c.matrix() * x);
  // With G = reshape(g, 9, 3):
  //   g^T kron(u, v) = (G u)^T v   and   g^T kron(b, r) = (G^T r)^T b.
  const Eigen::Map<const Eigen::Matrix<double, 9, 3>> gm(g.data());
  const Eigen::Matrix<double, 9, 1> gu = gm * u;
  const Eigen::Map<const Eigen::Matrix<double, 9, 1>> r(rotation.matrix().data());
  const Vec3 gr = gm.transpose() * r;

  Vec5 out;
  for (int i = 0; i < 3; ++i) {
    const Mat3 dr = rotation.matrix() * Hat(Vec3::Unit(i));
    out[i] = gu.dot(Eigen::Map<const Eigen::Matrix<double, 9, 1>>(dr.data()));
  }
  out.tail<2>() = direction.TangentBasis().transpose() * gr;
  return out;
}

Vec6 ResidualVector(const DataMatrix& c, const Rotation& rotation,
                    const UnitDirection& direction, const SolverWeights& weights) {
  Vec6 out;
  out.head<5>() = FunctionalGradient(c, rotation, direction);
  out[5] = weights.functional_weight * FunctionalValue(c, rotation, direction);
  return out;
}

RefineResult RefineRelativePose(const DataMatrix& c, const Rotation& r0,
                                const UnitDirection& u0,
                                const SolverWeights& weights, const LMConfig& lm) {
  if (c.n_pairs() < kMinPairs) {
    throw std::invalid_argument("RefineRelativePose: at least 5 bearing pairs required");
  }
  LMProblem<RelPoseState> problem;
  problem.tangent_dim = 5;
  problem.residual = [&](const RelPoseState& s) -> Eigen::VectorXd {
    return ResidualVector(c, s.rotation, s.direction, weights);
  };
  problem.retract = [](const RelPoseState& s, const Eigen::VectorXd& d) {
    return s.Retract({d.head<3>(), d.tail<2>()});
  };
  const LMResult<RelPoseState> res =
      LevenbergMarquardt(lm).Minimize(problem, RelPoseState{r0, u0});
  RefineResult out;
  out.rotation = res.point.rotation;
  out.direction = res.point.direction;
  out.functional = FunctionalValue(c, out.rotation, out.direction);
  out.status = res.status;
  return out;
}

RefineResult RefineRelativePose(std::span<const BearingPair> pairs,
                                const Rotation& r0, const UnitDirection& u0,
                                const SolverWeights& weights, const LMConfig& lm) {
  if (pairs.size() < static_cast<std::size_t>(kMinPairs)) {
    throw std::invalid_argument("RefineRelativePose: at least 5 bearing pairs required");
  }
  return RefineRelativePose(DataMatrix::Build(pairs), r0, u0, weights, lm);
}

void RansacConfig::Validate() const {
  if (!(sampson_inlier_threshold > 0.0)) {
    throw std::invalid_argument("RansacConfig: sampson_inlier_threshold must be > 0");
  }
  if (subsample_size < 5) {
    throw std::invalid_argument("RansacConfig: subsample_size must be >= 5");
  }
  if (ransac_iterations < 1 || refine_iterations < 0 || min_inliers < 1) {
    throw std::invalid_argument("RansacConfig: iteration counts and min_inliers must be positive");
  }
}

namespace {

struct Hypothesis {
  Rotation rotation;
  UnitDirection direction;
  std::vector<bool> mask;
  int inliers = 0;
  double cost = std::numeric_limits<double>::infinity();
  bool numerical_failure = false;
};

std::vector<BearingPair> Select(std::span<const BearingPair> pairs,
                                const std::vector<bool>& mask) {
  std::vector<BearingPair> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (mask[i]) out.push_back(pairs[i]);
  }
  return out;
}

// Classifies every pair and scores the hypothesis by its mean functional
// over the inliers.
void Score(std::span<const BearingPair> pairs, double threshold, Hypothesis& h) {
  h.mask.assign(pairs.size(), false);
  h.inliers = 0;
  double sum = 0.0;
  const Vec3 u = h.direction.vector();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double d = SampsonDistance(h.rotation, h.direction, pairs[i].f, pairs[i].f_prime);
    if (d * d <= threshold) {
      h.mask[i] = true;
      ++h.inliers;
      const double e = u.dot((h.rotation * pairs[i].f.vector()).cross(pairs[i].f_prime.vector()));
      sum += e * e;
    }
  }
  h.cost = h.inliers > 0 ? sum / h.inliers : std::numeric_limits<double>::infinity();
}

// Minimum eigenvector of the covariance of unit epipolar-plane normals.
// Every pair weighs the same, so a few large outlier normals cannot
// dominate the direction the way they do in M(R).
UnitDirection SeedDirection(const Rotation& rotation, std::span<const BearingPair> pairs) {
  Mat3 m = Mat3::Zero();
  for (const BearingPair& p : pairs) {
    const Vec3 normal = (rotation * p.f.vector()).cross(p.f_prime.vector());
    const double len = normal.norm();
    if (len > 1e-12) m.noalias() += (normal / len) * (normal / len).transpose();
  }
  return TranslationFromRotation(m).direction;
}

bool Better(const Hypothesis& a, const Hypothesis& b) {
  if (a.inliers != b.inliers) return a.inliers > b.inliers;
  return a.cost < b.cost;
}

}  // namespace

RelPoseResult RansacRelativePose(std::span<const BearingPair> pairs,
                                 const Rotation& prior,
                                 const SolverWeights& weights,
                                 const RansacConfig& config, const LMConfig& lm,
                                 std::mt19937_64& rng) {
  config.Validate();
  if (pairs.size() < static_cast<std::size_t>(config.subsample_size)) {
    throw std::invalid_argument("RansacRelativePose: fewer pairs than subsample_size");
  }
  const std::size_t n = pairs.size();

  Hypothesis best;
  best.rotation = prior;
  best.direction = SeedDirection(prior, pairs);
  Score(pairs, config.sampson_inlier_threshold, best);
  std::vector<bool> sampling_mask =
      best.inliers >= kMinPairs ? best.mask : std::vector<bool>(n, true);

  std::vector<std::size_t> pool;
  std::vector<BearingPair> sample;
  for (int it = 0; it < config.ransac_iterations; ++it) {
    pool.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (sampling_mask[i]) pool.push_back(i);
    }
    if (pool.size() < static_cast<std::size_t>(kMinPairs)) {
      pool.resize(n);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
    }
    // Partial Fisher-Yates draw without replacement.
    const std::size_t draw = std::min(pool.size(), static_cast<std::size_t>(config.subsample_size));
    sample.clear();
    for (std::size_t k = 0; k < draw; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      sample.push_back(pairs[pool[k]]);
    }

    const UnitDirection u0 =
        TranslationFromRotation(EpipolarNormalCovariance(best.rotation, sample)).direction;
    const RefineResult refined =
        RefineRelativePose(sample, best.rotation, u0, weights, lm);
    Hypothesis h;
    h.rotation = refined.rotation;
    h.direction = refined.direction;
    h.numerical_failure = refined.status.reason == LMTermination::kNumericalFailure;
    Score(pairs, config.sampson_inlier_threshold, h);
    if (!h.numerical_failure && Better(h, best)) best = h;
    if (best.inliers >= kMinPairs) sampling_mask = best.mask;
  }

  for (int it = 0; it < config.refine_iterations; ++it) {
    if (best.inliers < kMinPairs) break;
    const std::vector<BearingPair> inliers = Select(pairs, best.mask);
    const RefineResult refined =
        RefineRelativePose(inliers, best.rotation, best.direction, weights, lm);
    Hypothesis h;
    h.rotation = refined.rotation;
    h.direction = refined.direction;
    h.numerical_failure = refined.status.reason == LMTermination::kNumericalFailure;
    Score(pairs, config.sampson_inlier_threshold, h);
    if (h.numerical_failure || !(h.inliers > best.inliers || h.cost < best.cost)) break;
    best = h;
  }

  RelPoseResult out;
  out.rotation = best.rotation;
  out.direction = best.direction;
  out.inlier_mask = best.mask;
  out.num_inliers = best.inliers;
  if (best.inliers < config.min_inliers) {
    out.status = RelPoseStatus::kTooFewInliers;
    out.final_functional = best.inliers > 0 ? best.cost * best.inliers : 0.0;
    return out;
  }
  const std::vector<BearingPair> inliers = Select(pairs, best.mask);
  out.final_functional =
      FunctionalValue(DataMatrix::Build(inliers), best.rotation, best.direction);
  const DirectionEstimate eig =
      TranslationFromRotation(EpipolarNormalCovariance(best.rotation, inliers));
  out.status = eig.degenerate ? RelPoseStatus::kDegenerate : RelPoseStatus::kConverged;
  return out;
}

Rotation PerturbRotation(const Rotation& rotation, double max_deg,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> axis(-max_deg * kDegToRad, max_deg * kDegToRad);
  const Vec3 theta(axis(rng), axis(rng), axis(rng));
  return rotation.Retract(theta);
}

}  // namespace instavo
