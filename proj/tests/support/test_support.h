#pragma once

#include <random>
#include <vector>

#include "instavo/geometry.h"
#include "instavo/relpose.h"
#include "instavo/transmag.h"

namespace instavo::testing {

inline Vec3 RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline Rotation RandomRotation(std::mt19937_64& rng, double max_angle = 3.0) {
  std::uniform_real_distribution<double> a(0.0, max_angle);
  return Rotation::Exp(RandomUnit(rng) * a(rng));
}

// Points spread in front of the keyframe camera; `depths` receives the range
// along each keyframe bearing.
inline std::vector<BearingPair> NoiselessPairs(const Rotation& r, const Vec3& t, int n,
                                               std::mt19937_64& rng,
                                               std::vector<double>* depths = nullptr) {
  std::uniform_real_distribution<double> xy(-1.0, 1.0);
  std::uniform_real_distribution<double> z(2.0, 8.0);
  std::vector<BearingPair> pairs;
  while (static_cast<int>(pairs.size()) < n) {
    const Vec3 p(xy(rng) * 3.0, xy(rng) * 2.0, z(rng));
    const Vec3 q = r * p + t;
    if (q.z() < 0.5) continue;
    pairs.push_back({Bearing::FromVector(p), Bearing::FromVector(q)});
    if (depths) depths->push_back(p.norm());
  }
  return pairs;
}

// Direct evaluation of sum (u . ((R f) x f'))^2.
inline double DirectFunctional(const std::vector<BearingPair>& pairs, const Rotation& r,
                               const Vec3& u) {
  double sum = 0.0;
  for (const BearingPair& p : pairs) {
    const double e = u.dot((r * p.f.vector()).cross(p.f_prime.vector()));
    sum += e * e;
  }
  return sum;
}

}  // namespace instavo::testing
