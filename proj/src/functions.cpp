#include "limg/functions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

#include "limg/rng.hpp"

namespace limg {

namespace {

constexpr std::array<std::string_view, kBbobCount> kBbobNames = {
    "Sphere",
    "Ellipsoidal",
    "Rastrigin",
    "Bueche-Rastrigin",
    "Linear Slope",
    "Attractive Sector",
    "Step Ellipsoidal",
    "Rosenbrock",
    "Rotated Rosenbrock",
    "Rotated Ellipsoidal",
    "Discus",
    "Bent Cigar",
    "Sharp Ridge",
    "Different Powers",
    "Rotated Rastrigin",
    "Weierstrass",
    "Schaffers F7",
    "Schaffers F7 Ill-Conditioned",
    "Griewank-Rosenbrock F8F2",
    "Schwefel",
    "Gallagher 101 Peaks",
    "Gallagher 21 Peaks",
    "Katsuura",
    "Lunacek bi-Rastrigin",
};

constexpr std::array<std::string_view, kPboCount> kPboNames = {
    "OneMax", "LeadingOnes", "Linear", "LABS", "IsingRing", "IsingTriangular",
};

constexpr double kPi = std::numbers::pi;

// Which of R and Q each BBOB function uses (index 0 unused).
constexpr std::array<int, kBbobCount + 1> kRotationCount = {
    0,                 //
    0, 0, 0, 0, 0,     // f1-f5
    2, 2, 0, 1, 1,     // f6-f10
    1, 1, 2, 1, 2,     // f11-f15
    2, 2, 2, 1, 0,     // f16-f20
    1, 1, 2, 2,        // f21-f24
};

// i / (D - 1), zero for D == 1.
double ratio(int i, int d) { return d > 1 ? static_cast<double>(i) / (d - 1) : 0.0; }

double t_osz(double v) {
  if (v == 0.0) return 0.0;
  const double xh = std::log(std::abs(v));
  const double c1 = v > 0 ? 10.0 : 5.5;
  const double c2 = v > 0 ? 7.9 : 3.1;
  return std::copysign(std::exp(xh + 0.049 * (std::sin(c1 * xh) + std::sin(c2 * xh))), v);
}

Eigen::VectorXd t_osz(Eigen::VectorXd v) {
  for (auto& e : v) e = t_osz(e);
  return v;
}

Eigen::VectorXd t_asy(Eigen::VectorXd v, double beta) {
  const int d = static_cast<int>(v.size());
  for (int i = 0; i < d; ++i) {
    if (v[i] > 0) v[i] = std::pow(v[i], 1.0 + beta * ratio(i, d) * std::sqrt(v[i]));
  }
  return v;
}

// Diagonal of Lambda^alpha.
Eigen::VectorXd lambda(double alpha, int d) {
  Eigen::VectorXd l(d);
  for (int i = 0; i < d; ++i) l[i] = std::pow(alpha, 0.5 * ratio(i, d));
  return l;
}

double f_pen(const Eigen::VectorXd& x) {
  double s = 0;
  for (double v : x) {
    const double excess = std::abs(v) - 5.0;
    if (excess > 0) s += excess * excess;
  }
  return s;
}

double rastrigin_sum(const Eigen::VectorXd& z) {
  const double d = static_cast<double>(z.size());
  double c = 0;
  for (double v : z) c += std::cos(2.0 * kPi * v);
  return 10.0 * (d - c) + z.squaredNorm();
}

double rosenbrock_sum(const Eigen::VectorXd& z) {
  double s = 0;
  for (Eigen::Index i = 0; i + 1 < z.size(); ++i) {
    const double a = z[i] * z[i] - z[i + 1];
    const double b = z[i] - 1.0;
    s += 100.0 * a * a + b * b;
  }
  return s;
}

double schaffers(const Eigen::VectorXd& z, const Eigen::VectorXd& x) {
  const Eigen::Index d = z.size();
  if (d < 2) return 10.0 * f_pen(x);
  double acc = 0;
  for (Eigen::Index i = 0; i + 1 < d; ++i) {
    const double s = std::sqrt(z[i] * z[i] + z[i + 1] * z[i + 1]);
    const double rs = std::sqrt(s);
    const double sn = std::sin(50.0 * std::pow(s, 0.2));
    acc += rs + rs * sn * sn;
  }
  acc /= static_cast<double>(d - 1);
  return acc * acc + 10.0 * f_pen(x);
}

double weierstrass_term(double z) {
  double s = 0;
  double amp = 1.0;
  double freq = 1.0;
  for (int k = 0; k < 12; ++k) {
    s += amp * std::cos(2.0 * kPi * freq * (z + 0.5));
    amp *= 0.5;
    freq *= 3.0;
  }
  return s;
}

std::string bytes_of(std::span<const double> x) {
  std::string key(x.size() * sizeof(double), '\0');
  if (!x.empty()) std::memcpy(key.data(), x.data(), key.size());
  return key;
}

}  // namespace

std::string_view to_string(Suite suite) {
  return suite == Suite::ContinuousBBOB ? "bbob" : "pbo";
}

Suite parse_suite(std::string_view text) {
  if (text == "bbob" || text == "ContinuousBBOB") return Suite::ContinuousBBOB;
  if (text == "pbo" || text == "DiscretePB") return Suite::DiscretePB;
  throw ProblemError("unknown suite '" + std::string(text) + "'");
}

int function_count(Suite suite) {
  return suite == Suite::ContinuousBBOB ? kBbobCount : kPboCount;
}

ProblemId problem(Suite suite, int index) {
  if (index < 1 || index > function_count(suite)) {
    throw ProblemError("problem index " + std::to_string(index) + " outside suite " +
                       std::string(to_string(suite)));
  }
  const auto name = suite == Suite::ContinuousBBOB ? kBbobNames[index - 1] : kPboNames[index - 1];
  return {suite, index, std::string(name)};
}

std::vector<ProblemId> list_functions(Suite suite) {
  std::vector<ProblemId> out;
  for (int k = 1; k <= function_count(suite); ++k) out.push_back(problem(suite, k));
  return out;
}

int bbob_group(int index) {
  if (index < 1 || index > kBbobCount) throw ProblemError("not a BBOB index");
  if (index <= 5) return 1;
  if (index <= 9) return 2;
  if (index <= 14) return 3;
  if (index <= 19) return 4;
  return 5;
}

void EvalCounter::record(std::span<const double> x) {
  ++total_;
  seen_.insert(bytes_of(x));
}

void EvalCounter::merge(const EvalCounter& other) {
  total_ += other.total_;
  seen_.insert(other.seen_.begin(), other.seen_.end());
}

Eigen::MatrixXd random_orthogonal(int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) m(i, j) = rng.normal();
  // Modified Gram-Schmidt, two passes.
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < d; ++j) {
      for (int k = 0; k < j; ++k) m.col(j) -= m.col(k).dot(m.col(j)) * m.col(k);
      m.col(j).normalize();
    }
  }
  return m;
}

FunctionInstance make_instance(const ProblemId& id, int d, std::uint64_t instance_seed,
                               InstanceOptions options) {
  const ProblemId pid = problem(id.suite, id.index);
  if (d < 1) throw ProblemError("dimension must be at least 1");
  if (pid.suite == Suite::DiscretePB) {
    if (d > kMaxBitstringLength) {
      throw ProblemError("bitstring length " + std::to_string(d) + " exceeds " +
                         std::to_string(kMaxBitstringLength));
    }
    if (pid.index == 6) {
      const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
      if (side * side != d) throw ProblemError("IsingTriangular needs a square bitstring length");
    }
  }

  FunctionInstance inst;
  inst.problem_ = pid;
  inst.dim_ = d;
  inst.seed_ = instance_seed;

  const Rng base(derive_seed(instance_seed, {static_cast<std::uint64_t>(pid.suite),
                                             static_cast<std::uint64_t>(pid.index),
                                             static_cast<std::uint64_t>(d)}));
  if (!options.zero_offset) {
    Rng r = base.split("offset");
    inst.f_offset_ = std::round(r.uniform(-100.0, 100.0) * 100.0) / 100.0;
  }
  if (pid.suite == Suite::DiscretePB) return inst;

  const int k = pid.index;
  inst.translation_ = Eigen::VectorXd::Zero(d);
  if (!options.zero_translation) {
    Rng r = base.split("translation");
    for (int i = 0; i < d; ++i) inst.translation_[i] = r.uniform(-4.0, 4.0);
  }
  inst.signs_ = Eigen::VectorXd::Ones(d);
  if (!options.zero_translation) {
    Rng r = base.split("signs");
    for (int i = 0; i < d; ++i) inst.signs_[i] = r.uniform() < 0.5 ? -1.0 : 1.0;
  }
  for (int j = 0; j < kRotationCount[k]; ++j) {
    if (options.identity_rotation) {
      inst.rotations_.push_back(Eigen::MatrixXd::Identity(d, d));
    } else {
      inst.rotations_.push_back(random_orthogonal(d, base.split(j == 0 ? "rot-r" : "rot-q").next()));
    }
  }

  auto& xopt = inst.translation_;
  const double c = std::max(1.0, std::sqrt(static_cast<double>(d)) / 8.0);
  switch (k) {
    case 4:
      for (int i = 0; i < d; i += 2) xopt[i] = std::abs(xopt[i]);
      break;
    case 5:
      xopt = 5.0 * inst.signs_;
      break;
    case 8:
      xopt *= 0.75;  // [-3, 3]
      break;
    case 9:
    case 19:
      xopt = inst.rot_r().transpose() * Eigen::VectorXd::Constant(d, 0.5 / c);
      break;
    case 20:
      xopt = 0.5 * 4.2096874633 * inst.signs_;
      break;
    case 24:
      xopt = 0.5 * 2.5 * inst.signs_;
      break;
    case 21:
    case 22: {
      const bool many = k == 21;
      const int count = many ? 101 : 21;
      const double global_scale = many ? 1.0 : 0.98;
      const double local_half = many ? 5.0 : 4.9;
      const double global_alpha = many ? 1000.0 : 1.0e6;
      xopt *= global_scale;
      Rng r = base.split("peaks");
      // Condition numbers 1000^(2j/(count-2)), j = 0..count-2, in random order.
      std::vector<int> order(count - 1);
      std::iota(order.begin(), order.end(), 0);
      for (int i = count - 2; i > 0; --i) std::swap(order[i], order[r.below(i + 1)]);
      const Eigen::MatrixXd& rot = inst.rot_r();
      for (int p = 0; p < count; ++p) {
        GallagherPeak peak;
        Eigen::VectorXd y(d);
        double alpha = global_alpha;
        if (p == 0) {
          y = xopt;
          peak.weight = 10.0;
        } else {
          for (int i = 0; i < d; ++i) y[i] = r.uniform(-local_half, local_half);
          peak.weight = 1.1 + 8.0 * (p - 1) / (count - 2.0);
          alpha = std::pow(1000.0, 2.0 * order[p - 1] / (count - 2.0));
        }
        Eigen::VectorXd diag = lambda(alpha, d) / std::pow(alpha, 0.25);
        for (int i = d - 1; i > 0; --i) std::swap(diag[i], diag[r.below(i + 1)]);
        peak.rotated_centre = rot * y;
        peak.conditioning = diag;
        inst.peaks_.push_back(std::move(peak));
      }
      break;
    }
    default:
      break;
  }
  inst.optimum_ = xopt;
  return inst;
}

double FunctionInstance::operator()(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw ProblemError("expected a vector of length " + std::to_string(dim_) + ", got " +
                       std::to_string(x.size()));
  }
  if (problem_.suite == Suite::DiscretePB) return eval_pbo(x) + f_offset_;
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(x.data(), dim_);
  return eval_bbob(v) + f_offset_;
}

double FunctionInstance::eval_bbob(const Eigen::VectorXd& x) const {
  const int d = dim_;
  const Eigen::VectorXd& xopt = translation_;
  switch (problem_.index) {
    case 1:
      return (x - xopt).squaredNorm();
    case 2: {
      const Eigen::VectorXd z = t_osz(x - xopt);
      double s = 0;
      for (int i = 0; i < d; ++i) s += std::pow(10.0, 6.0 * ratio(i, d)) * z[i] * z[i];
      return s;
    }
    case 3: {
      const Eigen::VectorXd z = lambda(10.0, d).cwiseProduct(t_asy(t_osz(x - xopt), 0.2));
      return rastrigin_sum(z);
    }
    case 4: {
      Eigen::VectorXd z = t_osz(x - xopt);
      for (int i = 0; i < d; ++i) {
        const double s = std::pow(10.0, 0.5 * ratio(i, d));
        z[i] *= (i % 2 == 0 && z[i] > 0) ? 10.0 * s : s;
      }
      return rastrigin_sum(z) + 100.0 * f_pen(x);
    }
    case 5: {
      double f = 0;
      for (int i = 0; i < d; ++i) {
        const double s = signs_[i] * std::pow(10.0, ratio(i, d));
        const double z = xopt[i] * x[i] < 25.0 ? x[i] : xopt[i];
        f += 5.0 * std::abs(s) - s * z;
      }
      return f;
    }
    case 6: {
      const Eigen::VectorXd z =
          rot_q() * lambda(10.0, d).cwiseProduct(rot_r() * (x - xopt));
      double s = 0;
      for (int i = 0; i < d; ++i) {
        const double w = z[i] * xopt[i] > 0 ? 100.0 : 1.0;
        s += w * w * z[i] * z[i];
      }
      return std::pow(t_osz(s), 0.9);
    }
    case 7: {
      const Eigen::VectorXd zh = lambda(10.0, d).cwiseProduct(rot_r() * (x - xopt));
      Eigen::VectorXd zt(d);
      for (int i = 0; i < d; ++i) {
        zt[i] = std::abs(zh[i]) > 0.5 ? std::floor(0.5 + zh[i])
                                      : std::floor(0.5 + 10.0 * zh[i]) / 10.0;
      }
      const Eigen::VectorXd z = rot_q() * zt;
      double s = 0;
      for (int i = 0; i < d; ++i) s += std::pow(10.0, 2.0 * ratio(i, d)) * z[i] * z[i];
      return 0.1 * std::max(std::abs(zh[0]) / 1.0e4, s) + f_pen(x);
    }
    case 8: {
      const double c = std::max(1.0, std::sqrt(static_cast<double>(d)) / 8.0);
      return rosenbrock_sum((c * (x - xopt)).array() + 1.0);
    }
    case 9: {
      const double c = std::max(1.0, std::sqrt(static_cast<double>(d)) / 8.0);
      return rosenbrock_sum((c * (rot_r() * x)).array() + 0.5);
    }
    case 10: {
      const Eigen::VectorXd z = t_osz(rot_r() * (x - xopt));
      double s = 0;
      for (int i = 0; i < d; ++i) s += std::pow(10.0, 6.0 * ratio(i, d)) * z[i] * z[i];
      return s;
    }
    case 11: {
      const Eigen::VectorXd z = t_osz(rot_r() * (x - xopt));
      return 1.0e6 * z[0] * z[0] + (z.squaredNorm() - z[0] * z[0]);
    }
    case 12: {
      const Eigen::VectorXd z = rot_r() * t_asy(rot_r() * (x - xopt), 0.5);
      return z[0] * z[0] + 1.0e6 * (z.squaredNorm() - z[0] * z[0]);
    }
    case 13: {
      const Eigen::VectorXd z = rot_q() * lambda(10.0, d).cwiseProduct(rot_r() * (x - xopt));
      return z[0] * z[0] + 100.0 * std::sqrt(z.tail(d - 1).squaredNorm());
    }
    case 14: {
      const Eigen::VectorXd z = rot_r() * (x - xopt);
      double s = 0;
      for (int i = 0; i < d; ++i) s += std::pow(std::abs(z[i]), 2.0 + 4.0 * ratio(i, d));
      return std::sqrt(s);
    }
    case 15: {
      const Eigen::VectorXd z =
          rot_r() * lambda(10.0, d).cwiseProduct(rot_q() * t_asy(t_osz(rot_r() * (x - xopt)), 0.2));
      return rastrigin_sum(z);
    }
    case 16: {
      const Eigen::VectorXd z =
          rot_r() * lambda(0.01, d).cwiseProduct(rot_q() * t_osz(rot_r() * (x - xopt)));
      const double f0 = weierstrass_term(0.0);
      double s = 0;
      for (int i = 0; i < d; ++i) s += weierstrass_term(z[i]) - f0;
      const double m = s / d;
      return 10.0 * m * m * m + 10.0 / d * f_pen(x);
    }
    case 17:
    case 18: {
      const double alpha = problem_.index == 17 ? 10.0 : 1000.0;
      const Eigen::VectorXd z =
          lambda(alpha, d).cwiseProduct(rot_q() * t_asy(rot_r() * (x - xopt), 0.5));
      return schaffers(z, x);
    }
    case 19: {
      if (d < 2) return 0.0;
      const double c = std::max(1.0, std::sqrt(static_cast<double>(d)) / 8.0);
      const Eigen::VectorXd z = (c * (rot_r() * x)).array() + 0.5;
      double s = 0;
      for (int i = 0; i + 1 < d; ++i) {
        const double a = z[i] * z[i] - z[i + 1];
        const double b = z[i] - 1.0;
        const double si = 100.0 * a * a + b * b;
        s += si / 4000.0 - std::cos(si);
      }
      return 10.0 * s / (d - 1) + 10.0;
    }
    case 20: {
      const Eigen::VectorXd xh = 2.0 * signs_.cwiseProduct(x);
      const Eigen::VectorXd two_abs = 2.0 * xopt.cwiseAbs();
      Eigen::VectorXd zh = xh;
      for (int i = 1; i < d; ++i) zh[i] += 0.25 * (xh[i - 1] - two_abs[i - 1]);
      const Eigen::VectorXd z =
          100.0 * (lambda(10.0, d).cwiseProduct(zh - two_abs) + two_abs);
      double s = 0;
      for (int i = 0; i < d; ++i) s += z[i] * std::sin(std::sqrt(std::abs(z[i])));
      return -s / (100.0 * d) + 4.189828872724339 + 100.0 * f_pen(z / 100.0);
    }
    case 21:
    case 22: {
      const Eigen::VectorXd rx = rot_r() * x;
      double best = 0;
      for (const auto& peak : peaks_) {
        const Eigen::VectorXd diff = rx - peak.rotated_centre;
        const double q = diff.cwiseProduct(diff).dot(peak.conditioning);
        best = std::max(best, peak.weight * std::exp(-q / (2.0 * d)));
      }
      const double t = t_osz(10.0 - best);
      return t * t + f_pen(x);
    }
    case 23: {
      const Eigen::VectorXd z =
          rot_q() * lambda(100.0, d).cwiseProduct(rot_r() * (x - xopt));
      const double dd = static_cast<double>(d);
      const double expo = 10.0 / std::pow(dd, 1.2);
      double prod = 1.0;
      for (int i = 0; i < d; ++i) {
        double s = 0;
        double p2 = 1.0;
        for (int j = 1; j <= 32; ++j) {
          p2 *= 2.0;
          const double v = p2 * z[i];
          s += std::abs(v - std::nearbyint(v)) / p2;
        }
        prod *= std::pow(1.0 + (i + 1) * s, expo);
      }
      return 10.0 / (dd * dd) * (prod - 1.0) + f_pen(x);
    }
    case 24: {
      const double mu0 = 2.5;
      const double dd = static_cast<double>(d);
      const double s = 1.0 - 1.0 / (2.0 * std::sqrt(dd + 20.0) - 8.2);
      const double mu1 = -std::sqrt((mu0 * mu0 - 1.0) / s);
      const Eigen::VectorXd xh = 2.0 * signs_.cwiseProduct(x);
      const Eigen::VectorXd z =
          rot_q() * lambda(100.0, d).cwiseProduct(rot_r() * (xh.array() - mu0).matrix());
      const double a = (xh.array() - mu0).square().sum();
      const double b = dd + s * (xh.array() - mu1).square().sum();
      double cs = 0;
      for (double v : z) cs += std::cos(2.0 * kPi * v);
      return std::min(a, b) + 10.0 * (dd - cs) + 1.0e4 * f_pen(x);
    }
    default:
      throw ProblemError("unknown BBOB index");
  }
}

double FunctionInstance::eval_pbo(std::span<const double> x) const {
  const int n = dim_;
  std::vector<int> bits(n);
  for (int i = 0; i < n; ++i) {
    if (x[i] == 0.0) {
      bits[i] = 0;
    } else if (x[i] == 1.0) {
      bits[i] = 1;
    } else {
      throw ProblemError("pseudo-Boolean input must be 0 or 1");
    }
  }
  switch (problem_.index) {
    case 1:
      return std::accumulate(bits.begin(), bits.end(), 0.0);
    case 2: {
      int run = 0;
      while (run < n && bits[run] == 1) ++run;
      return run;
    }
    case 3: {
      double s = 0;
      for (int i = 0; i < n; ++i) s += (i + 1) * bits[i];
      return s;
    }
    case 4: {
      // Merit factor n^2 / (2E); n = 1 has no off-peak autocorrelation and scores 0.
      if (n < 2) return 0.0;
      double energy = 0;
      for (int lag = 1; lag < n; ++lag) {
        int c = 0;
        for (int i = 0; i + lag < n; ++i) c += (2 * bits[i] - 1) * (2 * bits[i + lag] - 1);
        energy += static_cast<double>(c) * c;
      }
      return static_cast<double>(n) * n / (2.0 * energy);
    }
    case 5: {
      int agree = 0;
      for (int i = 0; i < n; ++i) agree += bits[i] == bits[(i + 1) % n];
      return agree;
    }
    case 6: {
      const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
      auto at = [&](int r, int c) { return bits[(r % side) * side + (c % side)]; };
      int agree = 0;
      for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
          const int v = at(r, c);
          agree += v == at(r, c + 1);
          agree += v == at(r + 1, c);
          agree += v == at(r + 1, c + 1);
        }
      }
      return agree;
    }
    default:
      throw ProblemError("unknown PBO index");
  }
}

double evaluate(const FunctionInstance& instance, std::span<const double> x, EvalCounter& counter) {
  const double value = instance(x);
  counter.record(x);
  return value;
}

}  // namespace limg
