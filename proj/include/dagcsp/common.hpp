#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace dagcsp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Eigen::Index;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define DAGCSP_ERROR_TYPE(Name)          \
  struct Name : Error {                  \
    using Error::Error;                  \
  }

DAGCSP_ERROR_TYPE(CycleDetected);
DAGCSP_ERROR_TYPE(DimensionMismatch);
DAGCSP_ERROR_TYPE(EmptyPointSet);
DAGCSP_ERROR_TYPE(UnknownRole);
DAGCSP_ERROR_TYPE(DimensionUnsupported);
DAGCSP_ERROR_TYPE(BudgetExhaustedEmpty);
DAGCSP_ERROR_TYPE(SingleClassDataset);
DAGCSP_ERROR_TYPE(SingularKernel);
DAGCSP_ERROR_TYPE(EmptyUpstreamSolution);
DAGCSP_ERROR_TYPE(EmptySubproblemSolution);
DAGCSP_ERROR_TYPE(MissingCouplingBox);
DAGCSP_ERROR_TYPE(NotLiftedRun);
DAGCSP_ERROR_TYPE(GraphMismatch);
DAGCSP_ERROR_TYPE(StateMismatch);
DAGCSP_ERROR_TYPE(NonpositiveTemperature);
DAGCSP_ERROR_TYPE(NonFiniteState);
DAGCSP_ERROR_TYPE(DimensionGuard);
DAGCSP_ERROR_TYPE(NoFeasibleApproximator);
DAGCSP_ERROR_TYPE(DivisionByZero);
DAGCSP_ERROR_TYPE(IoError);
DAGCSP_ERROR_TYPE(ConfigError);

#undef DAGCSP_ERROR_TYPE

// Counter-based RNG. Streams are derived by hashing (seed, tags...) so that
// results do not depend on evaluation order or thread scheduling.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; one value per call, pair cached
  double normal();

  std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t n) {
  return mix_seed(mix_seed(seed, tag), n);
}

// Runs fn(i) for i in [0, n). Chunked over `workers` threads; every iteration
// writes only its own slot, so results are identical to a serial run.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

int default_workers();

}  // namespace dagcsp
