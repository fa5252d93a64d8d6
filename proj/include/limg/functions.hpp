#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

namespace limg {

enum class Suite { ContinuousBBOB, DiscretePB };

std::string_view to_string(Suite suite);
Suite parse_suite(std::string_view text);

// Thrown for unknown problems, unsupported dimensions and malformed inputs.
class ProblemError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ProblemId {
  Suite suite = Suite::ContinuousBBOB;
  int index = 1;  // 1-based, as numbered in the BBOB and PBO documentation
  std::string display_name;

  friend bool operator==(const ProblemId& a, const ProblemId& b) {
    return a.suite == b.suite && a.index == b.index;
  }
};

inline constexpr int kBbobCount = 24;
inline constexpr int kPboCount = 6;
inline constexpr int kMaxBitstringLength = 64;

int function_count(Suite suite);

// Validates `index` and fills in the display name.
ProblemId problem(Suite suite, int index);

// Stable, documentation-ordered list of every problem in `suite`.
std::vector<ProblemId> list_functions(Suite suite);

// BBOB function group (1..5): separable, low/moderate conditioning,
// high conditioning, multimodal with adequate structure, weak structure.
int bbob_group(int index);

// Counts objective queries. `distinct` tracks exact bit patterns, so one
// counter must not be shared between threads; give each worker its own and
// merge() them afterwards.
class EvalCounter {
 public:
  struct Snapshot {
    std::uint64_t distinct_queries = 0;
    std::uint64_t total_queries = 0;
    friend bool operator==(const Snapshot&, const Snapshot&) = default;
  };

  void record(std::span<const double> x);
  void merge(const EvalCounter& other);

  std::uint64_t distinct_queries() const { return seen_.size(); }
  std::uint64_t total_queries() const { return total_; }
  Snapshot snapshot() const { return {distinct_queries(), total_queries()}; }

 private:
  std::unordered_set<std::string> seen_;
  std::uint64_t total_ = 0;
};

// One Gallagher peak in rotated coordinates: centre R*y and the diagonal of
// the conditioning matrix C.
struct GallagherPeak {
  Eigen::VectorXd rotated_centre;
  Eigen::VectorXd conditioning;
  double weight = 0.0;
};

struct InstanceOptions {
  bool zero_translation = false;
  bool identity_rotation = false;
  bool zero_offset = false;

  // The untransformed base function.
  static InstanceOptions raw() { return {true, true, true}; }
};

class FunctionInstance {
 public:
  const ProblemId& problem() const { return problem_; }
  int dim() const { return dim_; }
  std::uint64_t instance_seed() const { return seed_; }
  double f_offset() const { return f_offset_; }

  // Shift of the optimum (continuous suite). Empty for DiscretePB.
  const Eigen::VectorXd& translation() const { return translation_; }
  // Zero, one or two orthogonal matrices depending on the function.
  const std::vector<Eigen::MatrixXd>& rotations() const { return rotations_; }

  // Location where the function attains f_offset (continuous suite). For
  // Schwefel this holds to about 1e-14 through the rounded optimum constant.
  const std::optional<Eigen::VectorXd>& optimum() const { return optimum_; }

  // Evaluates without touching any counter.
  double operator()(std::span<const double> x) const;

 private:
  friend FunctionInstance make_instance(const ProblemId&, int, std::uint64_t, InstanceOptions);

  double eval_bbob(const Eigen::VectorXd& x) const;
  double eval_pbo(std::span<const double> x) const;
  const Eigen::MatrixXd& rot_r() const { return rotations_.at(0); }
  const Eigen::MatrixXd& rot_q() const { return rotations_.at(1); }

  ProblemId problem_;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  double f_offset_ = 0.0;
  Eigen::VectorXd translation_;
  std::vector<Eigen::MatrixXd> rotations_;
  std::optional<Eigen::VectorXd> optimum_;

  // Per-function extras.
  Eigen::VectorXd signs_;  // random +-1 vector (linear slope, Schwefel, Lunacek)
  std::vector<GallagherPeak> peaks_;
};

// Builds the seeded instance. Deterministic in (problem, d, seed, options).
FunctionInstance make_instance(const ProblemId& problem, int d, std::uint64_t instance_seed,
                               InstanceOptions options = {});

// Evaluates and records the query on `counter`.
double evaluate(const FunctionInstance& instance, std::span<const double> x, EvalCounter& counter);

// Seeded Haar-distributed orthogonal matrix: Gram-Schmidt on Gaussian columns.
Eigen::MatrixXd random_orthogonal(int d, std::uint64_t seed);

}  // namespace limg
