#pragma once

#include <string>

#include "attnlab/corpus.hpp"
#include "attnlab/model.hpp"

namespace attnlab {

// Whole-file helpers. Reading a missing or unreadable path throws
// InvalidInput; writes create or truncate and throw EvaluationError when the
// stream fails.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Checkpoint format: a single JSON object with
//   format:  "attnlab_checkpoint"
//   version: 1
//   config:  {vocab_size, dim, layers, heads, max_len}
//   embed, pos, out_w: row-major double arrays
//   out_b:   double array
//   attn:    [layer][head] objects with wq, wk, wv row-major arrays
// Doubles are serialized shortest-round-trip, so save followed by load
// reproduces every parameter bit for bit.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

// Corpus format: line-delimited JSON. The first line is a header object
//   {format: "attnlab_corpus", version: 1, vocab_size, seq_len,
//    generator_spec: <the generator settings, verbatim>}
// and each following line is one token array.
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

}  // namespace attnlab
