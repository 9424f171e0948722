#include "attnlab/corpus.hpp"

#include <cmath>
#include <cstdio>

#include "attnlab/errors.hpp"
#include "attnlab/matrix.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

void Corpus::validate() const {
    if (vocab_size < 3) throw InvalidInput("corpus: vocab_size must be at least 3");
    if (seq_len == 0) throw InvalidInput("corpus: seq_len must be positive");
    Token limit = static_cast<Token>(vocab_size) - 1;  // the mask id, forbidden in data
    for (const auto& seq : sequences) {
        if (seq.size() != seq_len) throw InvalidInput("corpus: sequence length mismatch");
        for (Token t : seq)
            if (t < 0 || t >= limit) throw InvalidInput("corpus: token id out of data range");
    }
}

Corpus gen_markov(size_t vocab_size, size_t seq_len, size_t num_sequences,
                  double concentration, uint64_t seed) {
    if (vocab_size < 3) throw InvalidInput("gen_markov: vocab_size must be at least 3");
    if (seq_len < 2) throw InvalidInput("gen_markov: seq_len must be at least 2");
    if (num_sequences == 0) throw InvalidInput("gen_markov: num_sequences must be positive");
    if (!(concentration > 0.0) || !std::isfinite(concentration))
        throw InvalidInput("gen_markov: concentration must be positive and finite");

    size_t data_vocab = vocab_size - 1;
    Rng rng(seed);
    Matrix trans(data_vocab, data_vocab);
    for (size_t a = 0; a < data_vocab; ++a) {
        auto row = rng.dirichlet(data_vocab, concentration);
        for (size_t b = 0; b < data_vocab; ++b) trans.at(a, b) = row[b];
    }

    auto sample_row = [&](size_t a) -> Token {
        double u = rng.uniform01();
        double acc = 0.0;
        for (size_t b = 0; b < data_vocab; ++b) {
            acc += trans.at(a, b);
            if (u < acc) return static_cast<Token>(b);
        }
        return static_cast<Token>(data_vocab - 1);  // guard against fp shortfall
    };

    Corpus c;
    c.vocab_size = vocab_size;
    c.seq_len = seq_len;
    c.sequences.reserve(num_sequences);
    for (size_t s = 0; s < num_sequences; ++s) {
        TokenSeq seq(seq_len);
        seq[0] = static_cast<Token>(rng.index(data_vocab));
        for (size_t i = 1; i < seq_len; ++i) seq[i] = sample_row(static_cast<size_t>(seq[i - 1]));
        c.sequences.push_back(std::move(seq));
    }

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"generator\":\"markov\",\"vocab_size\":%zu,\"seq_len\":%zu,"
                  "\"num_sequences\":%zu,\"concentration\":%.17g,\"seed\":%llu}",
                  vocab_size, seq_len, num_sequences, concentration,
                  static_cast<unsigned long long>(seed));
    c.generator_spec = buf;
    return c;
}

Corpus gen_copy(size_t vocab_size, size_t half_len, size_t num_sequences, uint64_t seed) {
    if (vocab_size < 3) throw InvalidInput("gen_copy: vocab_size must be at least 3");
    if (half_len == 0) throw InvalidInput("gen_copy: half_len must be positive");
    if (num_sequences == 0) throw InvalidInput("gen_copy: num_sequences must be positive");

    size_t data_vocab = vocab_size - 1;
    Rng rng(seed);
    Corpus c;
    c.vocab_size = vocab_size;
    c.seq_len = 2 * half_len;
    c.sequences.reserve(num_sequences);
    for (size_t s = 0; s < num_sequences; ++s) {
        TokenSeq seq(2 * half_len);
        for (size_t i = 0; i < half_len; ++i) {
            seq[i] = static_cast<Token>(rng.index(data_vocab));
            seq[i + half_len] = seq[i];
        }
        c.sequences.push_back(std::move(seq));
    }

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"generator\":\"copy\",\"vocab_size\":%zu,\"half_len\":%zu,"
                  "\"num_sequences\":%zu,\"seed\":%llu}",
                  vocab_size, half_len, num_sequences, static_cast<unsigned long long>(seed));
    c.generator_spec = buf;
    return c;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double fraction, uint64_t seed) {
    if (!(fraction > 0.0) || !(fraction < 1.0))
        throw InvalidInput("split: fraction must lie strictly between 0 and 1");
    corpus.validate();

    std::vector<size_t> order(corpus.sequences.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    size_t first_count = static_cast<size_t>(std::llround(fraction * static_cast<double>(order.size())));
    if (first_count > order.size()) first_count = order.size();

    Corpus a = corpus, b = corpus;
    a.sequences.clear();
    b.sequences.clear();
    for (size_t i = 0; i < order.size(); ++i)
        (i < first_count ? a : b).sequences.push_back(corpus.sequences[order[i]]);
    return {std::move(a), std::move(b)};
}

}  // namespace attnlab
