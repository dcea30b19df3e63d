#pragma once

#include "ssmsec/train.hpp"

#include <cstdint>
#include <string>

namespace ssmsec {

inline const std::string kGenomicAlphabet = "ACGT";
inline const std::string kDefaultMotif = "GATTAC";

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

// Label 1 items carry the motif at a uniform position inside random flanks;
// label 0 items are random sequences resampled until the motif is absent.
// Classes are exactly balanced (n even) and the order is shuffled.
DatasetSplit gen_genomic_dataset(int n = 1000, int length = 200, std::uint64_t seed = 42, int test_size = 360,
                                 const std::string& motif = kDefaultMotif);
bool contains_motif(const std::vector<int>& tokens, const std::vector<int>& motif);

// Real-valued sequences: u_t = s * shift + N(0, 1) with label (s > 0).
DatasetSplit gen_mean_sign_dataset(int n, int length, std::uint64_t seed, int test_size, double shift = 0.15);

// Token sequences labelled by whether symbol 0 is the most frequent one.
Dataset gen_majority_dataset(int n, int length, int alphabet_size, std::uint64_t seed);

}  // namespace ssmsec
