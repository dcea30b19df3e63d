#include "ssmsec/datasets.hpp"

#include "ssmsec/rng.hpp"

#include <algorithm>
#include <numeric>

namespace ssmsec {

bool contains_motif(const std::vector<int>& tokens, const std::vector<int>& motif) {
  return !motif.empty() && std::search(tokens.begin(), tokens.end(), motif.begin(), motif.end()) != tokens.end();
}

namespace {

DatasetSplit split(Dataset all, int test_size, Rng& rng) {
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  // Test items alternate labels so both splits stay balanced.
  std::vector<std::size_t> pos, neg;
  for (std::size_t i : order) (all.labels[i] == 1 ? pos : neg).push_back(i);
  std::vector<std::size_t> test, train;
  for (int k = 0; k < test_size; ++k) {
    auto& src = (k % 2 == 0) ? pos : neg;
    test.push_back(src.back());
    src.pop_back();
  }
  train.insert(train.end(), pos.begin(), pos.end());
  train.insert(train.end(), neg.begin(), neg.end());
  rng.shuffle(train);
  rng.shuffle(test);
  return {all.subset(train), all.subset(test)};
}

}  // namespace

DatasetSplit gen_genomic_dataset(int n, int length, std::uint64_t seed, int test_size, const std::string& motif) {
  require(n >= 2 && n % 2 == 0, ErrorKind::InvalidArgument, "dataset size must be even and >= 2");
  require(test_size >= 0 && test_size < n && test_size % 2 == 0, ErrorKind::InvalidArgument,
          "test size must be even and smaller than n");
  const std::vector<int> m = encode_tokens(motif, kGenomicAlphabet);
  require(static_cast<int>(m.size()) <= length, ErrorKind::InvalidArgument, "motif longer than sequence");
  Rng rng(seed, 0x9e0);
  Dataset all;
  all.alphabet = kGenomicAlphabet;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    std::vector<int> seq(static_cast<std::size_t>(length));
    for (;;) {
      for (auto& t : seq) t = static_cast<int>(rng.uniform_int(4));
      if (label == 1) {
        const auto pos = rng.uniform_int(static_cast<std::uint64_t>(length - static_cast<int>(m.size()) + 1));
        std::copy(m.begin(), m.end(), seq.begin() + static_cast<std::ptrdiff_t>(pos));
        break;
      }
      if (!contains_motif(seq, m)) break;
    }
    all.tokens.push_back(std::move(seq));
    all.labels.push_back(label);
  }
  return split(std::move(all), test_size, rng);
}

DatasetSplit gen_mean_sign_dataset(int n, int length, std::uint64_t seed, int test_size, double shift) {
  require(n >= 2 && n % 2 == 0, ErrorKind::InvalidArgument, "dataset size must be even and >= 2");
  require(test_size >= 0 && test_size < n && test_size % 2 == 0, ErrorKind::InvalidArgument,
          "test size must be even and smaller than n");
  require(length >= 1, ErrorKind::InvalidArgument, "length must be positive");
  Rng rng(seed, 0x3ea1);
  Dataset all;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    RowMat u(length, 1);
    for (int t = 0; t < length; ++t) u(t, 0) = (label ? shift : -shift) + rng.normal();
    all.reals.push_back(std::move(u));
    all.labels.push_back(label);
  }
  return split(std::move(all), test_size, rng);
}

Dataset gen_majority_dataset(int n, int length, int alphabet_size, std::uint64_t seed) {
  require(n >= 1 && length >= 1 && alphabet_size >= 2 && alphabet_size <= 4, ErrorKind::InvalidArgument,
          "bad majority dataset shape");
  Rng rng(seed, 0x3a7);
  Dataset d;
  d.alphabet = kGenomicAlphabet.substr(0, static_cast<std::size_t>(alphabet_size));
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    std::vector<int> seq(static_cast<std::size_t>(length));
    for (auto& t : seq) {
      // Label 1 favours symbol 0, label 0 favours symbol 1.
      const double u = rng.uniform();
      t = u < 0.4 ? (label ? 0 : 1) : static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(alphabet_size)));
    }
    std::vector<int> counts(static_cast<std::size_t>(alphabet_size), 0);
    for (int t : seq) ++counts[static_cast<std::size_t>(t)];
    const int top = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    d.tokens.push_back(std::move(seq));
    d.labels.push_back(top == 0 ? 1 : 0);
  }
  return d;
}

}  // namespace ssmsec
