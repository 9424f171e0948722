#pragma once

#include <string>
#include <utility>
#include <vector>

#include "attnlab/types.hpp"

namespace attnlab {

// Fixed-length token sequences for training and evaluation. vocab_size is
// the model vocabulary including the reserved mask id (vocab_size - 1),
// which never appears in data.
struct Corpus {
    size_t vocab_size = 0;
    size_t seq_len = 0;
    std::vector<TokenSeq> sequences;
    std::string generator_spec;  // JSON text recording how the data was made

    void validate() const;  // InvalidInput on any violated invariant
};

// First-order Markov chains. Transition rows are Dirichlet(concentration)
// draws over the vocab_size - 1 data tokens; the first token is uniform.
Corpus gen_markov(size_t vocab_size, size_t seq_len, size_t num_sequences,
                  double concentration, uint64_t seed);

// Sequences of length 2 * half_len whose second half repeats the first:
// x[i] == x[i + half_len] for every i < half_len.
Corpus gen_copy(size_t vocab_size, size_t half_len, size_t num_sequences, uint64_t seed);

// Disjoint shuffle split; first part receives round(fraction * n) sequences.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double fraction, uint64_t seed);

}  // namespace attnlab
