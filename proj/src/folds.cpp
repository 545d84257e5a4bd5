#include "crashstack/folds.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "crashstack/error.hpp"
#include "crashstack/rng.hpp"

namespace crashstack {

std::vector<std::vector<int>> kfold_split(int n, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2");
  if (k > n) {
    throw ConfigError("kfold: k = " + std::to_string(k) + " exceeds n = " +
                      std::to_string(n));
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 0x6b666f6c64ULL));
  rng.shuffle(perm);

  std::vector<std::vector<int>> folds(k);
  const int base = n / k;
  const int extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    folds[f].assign(perm.begin() + pos, perm.begin() + pos + size);
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

std::vector<int> fold_complement(const std::vector<std::vector<int>>& folds,
                                 int n, int f) {
  std::vector<char> held(n, 0);
  for (int i : folds[f]) held[i] = 1;
  std::vector<int> out;
  out.reserve(n - folds[f].size());
  for (int i = 0; i < n; ++i) {
    if (!held[i]) out.push_back(i);
  }
  return out;
}

}  // namespace crashstack
