#ifndef CRASHSTACK_FOLDS_HPP_
#define CRASHSTACK_FOLDS_HPP_

#include <cstdint>
#include <vector>

namespace crashstack {

// Shuffles 0..n-1 with `seed` and deals them into k folds whose sizes differ
// by at most one (the first n % k folds get the extra index). Each fold is
// returned sorted. Throws ConfigError when k < 2 or k > n.
std::vector<std::vector<int>> kfold_split(int n, int k, std::uint64_t seed);

// Complement of fold `f` (sorted training indices).
std::vector<int> fold_complement(const std::vector<std::vector<int>>& folds,
                                 int n, int f);

}  // namespace crashstack

#endif  // CRASHSTACK_FOLDS_HPP_
