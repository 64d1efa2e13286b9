#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// Central-difference verification of the analytic gradients on small random
// networks: raw BPTT, the pre-training loss and the actor-critic loss.
namespace bimgame::gradcheck {

struct Result {
  std::string check;
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  double max_rel_error = 0.0;  // |a - n| / max(|a|, |n|, 1e-6)
  std::size_t worst_index = 0;
};

Result compare(const std::string& check, std::uint64_t seed, std::vector<double> x,
               const std::vector<double>& analytic,
               const std::function<double(const std::vector<double>&)>& loss, double eps);

// Runs every check for seeds 1..seeds.
std::vector<Result> run_suite(int seeds = 3, double eps = 1e-5);

}  // namespace bimgame::gradcheck
