#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "attnlab/corpus.hpp"
#include "attnlab/errors.hpp"

using namespace attnlab;

namespace {

// Empirical next-token conditionals from bigram counts, one row per
// conditioning token. Rows with no observations stay empty.
std::vector<std::vector<double>> bigram_conditionals(const Corpus& c) {
    size_t v = c.vocab_size - 1;
    std::vector<std::vector<double>> counts(v, std::vector<double>(v, 0.0));
    for (const TokenSeq& seq : c.sequences)
        for (size_t i = 0; i + 1 < seq.size(); ++i)
            counts[static_cast<size_t>(seq[i])][static_cast<size_t>(seq[i + 1])] += 1.0;
    for (auto& row : counts) {
        double total = 0.0;
        for (double x : row) total += x;
        if (total > 0.0)
            for (double& x : row) x /= total;
    }
    return counts;
}

}  // namespace

TEST_CASE("gen_markov is deterministic and respects its invariants") {
    Corpus a = gen_markov(6, 10, 50, 1.0, 99);
    Corpus b = gen_markov(6, 10, 50, 1.0, 99);
    REQUIRE(a.sequences.size() == 50);
    CHECK(a.seq_len == 10);
    CHECK(a.sequences == b.sequences);
    CHECK(a.generator_spec == b.generator_spec);
    for (const TokenSeq& seq : a.sequences) {
        CHECK(seq.size() == 10);
        for (Token t : seq) {
            CHECK(t >= 0);
            CHECK(t < 5);  // the mask id (5) never appears in data
        }
    }
}

TEST_CASE("gen_markov rejects degenerate sizes") {
    CHECK_THROWS_AS(gen_markov(2, 10, 5, 1.0, 0), InvalidInput);
    CHECK_THROWS_AS(gen_markov(6, 1, 5, 1.0, 0), InvalidInput);
    CHECK_THROWS_AS(gen_markov(6, 10, 0, 1.0, 0), InvalidInput);
    CHECK_THROWS_AS(gen_markov(6, 10, 5, 0.0, 0), InvalidInput);
}

TEST_CASE("tiny concentration gives near-deterministic chains") {
    // Next-token entropy, averaged over observed contexts, collapses as the
    // transition rows approach one-hot.
    Corpus c = gen_markov(8, 50, 200, 1e-3, 7);
    auto rows = bigram_conditionals(c);
    double entropy_sum = 0.0;
    size_t observed = 0;
    for (const auto& row : rows) {
        double total = 0.0;
        for (double x : row) total += x;
        if (total == 0.0) continue;
        double h = 0.0;
        for (double x : row)
            if (x > 0.0) h -= x * std::log(x);
        entropy_sum += h;
        ++observed;
    }
    REQUIRE(observed > 0);
    CHECK(entropy_sum / static_cast<double>(observed) < 0.1);
}

TEST_CASE("bigram frequencies from disjoint samples of one chain family agree") {
    // Both corpora share the transition matrix (same seed draws it before any
    // chain); dropping the first half of the larger corpus leaves a sample
    // disjoint from the smaller one. Each empirical conditional converges to
    // the same matrix, so their total-variation distance must be small.
    size_t n_small = 250;  // 250 sequences x 80 transitions = 2e4 per estimate
    Corpus small = gen_markov(5, 81, n_small, 1.0, 31);
    Corpus big = gen_markov(5, 81, 2 * n_small, 1.0, 31);
    CHECK(std::equal(small.sequences.begin(), small.sequences.end(), big.sequences.begin()));

    Corpus tail = big;
    tail.sequences.erase(tail.sequences.begin(),
                         tail.sequences.begin() + static_cast<ptrdiff_t>(n_small));
    auto pa = bigram_conditionals(small);
    auto pb = bigram_conditionals(tail);
    for (size_t row = 0; row < pa.size(); ++row) {
        double tv = 0.0;
        for (size_t j = 0; j < pa[row].size(); ++j) tv += std::fabs(pa[row][j] - pb[row][j]);
        CHECK(tv / 2.0 < 0.05);
    }
}

TEST_CASE("gen_copy sequences repeat their first half") {
    Corpus c = gen_copy(7, 4, 40, 3);
    CHECK(c.seq_len == 8);
    for (const TokenSeq& seq : c.sequences) {
        REQUIRE(seq.size() == 8);
        for (size_t i = 0; i < 4; ++i) CHECK(seq[i] == seq[i + 4]);
        for (Token t : seq) CHECK(t < 6);
    }
    Corpus pairs = gen_copy(4, 1, 10, 5);
    for (const TokenSeq& seq : pairs.sequences) {
        REQUIRE(seq.size() == 2);
        CHECK(seq[0] == seq[1]);
    }
}

TEST_CASE("gen_copy rejects degenerate sizes") {
    CHECK_THROWS_AS(gen_copy(2, 3, 5, 0), InvalidInput);
    CHECK_THROWS_AS(gen_copy(5, 0, 5, 0), InvalidInput);
    CHECK_THROWS_AS(gen_copy(5, 3, 0, 0), InvalidInput);
}

TEST_CASE("split is a disjoint deterministic partition") {
    Corpus c = gen_copy(6, 3, 10, 11);
    auto [train, test] = split(c, 0.5, 42);
    CHECK(train.sequences.size() == 5);
    CHECK(test.sequences.size() == 5);

    auto [train2, test2] = split(c, 0.5, 42);
    CHECK(train.sequences == train2.sequences);
    CHECK(test.sequences == test2.sequences);

    std::multiset<TokenSeq> original(c.sequences.begin(), c.sequences.end());
    std::multiset<TokenSeq> recombined(train.sequences.begin(), train.sequences.end());
    recombined.insert(test.sequences.begin(), test.sequences.end());
    CHECK(original == recombined);

    CHECK_THROWS_AS(split(c, 0.0, 0), InvalidInput);
    CHECK_THROWS_AS(split(c, 1.0, 0), InvalidInput);
}

TEST_CASE("corpus validate rejects mask tokens and ragged lengths") {
    Corpus c = gen_copy(5, 2, 3, 1);
    c.validate();
    Corpus bad = c;
    bad.sequences[0][1] = 4;  // the mask id for vocab_size 5
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    Corpus ragged = c;
    ragged.sequences[1].push_back(0);
    CHECK_THROWS_AS(ragged.validate(), InvalidInput);
}
