#include "attnlab/io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "attnlab/errors.hpp"

namespace attnlab {

using nlohmann::json;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    if (in.bad()) throw InvalidInput("read failed: " + path);
    return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EvaluationError("cannot open file for writing: " + path);
    out << content;
    out.flush();
    if (!out) throw EvaluationError("write failed: " + path);
}

namespace {

json matrix_to_json(const Matrix& m) { return m.data; }

Matrix matrix_from_json(const json& j, size_t rows, size_t cols, const char* name) {
    std::vector<double> data = j.get<std::vector<double>>();
    if (data.size() != rows * cols)
        throw InvalidInput(std::string("checkpoint: wrong size for ") + name);
    return Matrix(rows, cols, std::move(data));
}

json parse_object(const std::string& text, const std::string& path) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw InvalidInput("not a JSON object: " + path);
    return j;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    json j;
    j["format"] = "attnlab_checkpoint";
    j["version"] = 1;
    j["config"] = {{"vocab_size", params.config.vocab_size},
                   {"dim", params.config.dim},
                   {"layers", params.config.layers},
                   {"heads", params.config.heads},
                   {"max_len", params.config.max_len}};
    j["embed"] = matrix_to_json(params.embed);
    j["pos"] = matrix_to_json(params.pos);
    json layers = json::array();
    for (const auto& layer : params.attn) {
        json heads = json::array();
        for (const auto& head : layer)
            heads.push_back({{"wq", matrix_to_json(head.wq)},
                             {"wk", matrix_to_json(head.wk)},
                             {"wv", matrix_to_json(head.wv)}});
        layers.push_back(std::move(heads));
    }
    j["attn"] = std::move(layers);
    j["out_w"] = matrix_to_json(params.out_w);
    j["out_b"] = params.out_b;
    write_text_file(path, j.dump(2) + "\n");
}

ModelParams load_checkpoint(const std::string& path) {
    json j = parse_object(read_text_file(path), path);
    try {
        if (j.at("format") != "attnlab_checkpoint" || j.at("version") != 1)
            throw InvalidInput("unrecognized checkpoint format: " + path);

        ModelConfig config;
        const json& c = j.at("config");
        config.vocab_size = c.at("vocab_size").get<size_t>();
        config.dim = c.at("dim").get<size_t>();
        config.layers = c.at("layers").get<size_t>();
        config.heads = c.at("heads").get<size_t>();
        config.max_len = c.at("max_len").get<size_t>();
        config.validate();

        ModelParams params;
        params.config = config;
        params.embed = matrix_from_json(j.at("embed"), config.vocab_size, config.dim, "embed");
        params.pos = matrix_from_json(j.at("pos"), config.max_len, config.dim, "pos");
        const json& attn = j.at("attn");
        if (attn.size() != config.layers) throw InvalidInput("checkpoint: wrong layer count");
        size_t hd = config.head_dim();
        for (const json& layer : attn) {
            if (layer.size() != config.heads) throw InvalidInput("checkpoint: wrong head count");
            std::vector<HeadParams> heads;
            for (const json& head : layer)
                heads.push_back({matrix_from_json(head.at("wq"), hd, config.dim, "wq"),
                                 matrix_from_json(head.at("wk"), hd, config.dim, "wk"),
                                 matrix_from_json(head.at("wv"), hd, config.dim, "wv")});
            params.attn.push_back(std::move(heads));
        }
        params.out_w = matrix_from_json(j.at("out_w"), config.vocab_size, config.dim, "out_w");
        params.out_b = j.at("out_b").get<std::vector<double>>();
        if (params.out_b.size() != config.vocab_size)
            throw InvalidInput("checkpoint: wrong size for out_b");
        return params;
    } catch (const json::exception& e) {
        throw InvalidInput("malformed checkpoint " + path + ": " + e.what());
    }
}

void save_corpus(const std::string& path, const Corpus& corpus) {
    corpus.validate();
    json header;
    header["format"] = "attnlab_corpus";
    header["version"] = 1;
    header["vocab_size"] = corpus.vocab_size;
    header["seq_len"] = corpus.seq_len;
    header["generator_spec"] = corpus.generator_spec;
    std::string out = header.dump();
    out += '\n';
    for (const TokenSeq& seq : corpus.sequences) {
        out += json(seq).dump();
        out += '\n';
    }
    write_text_file(path, out);
}

Corpus load_corpus(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("empty corpus file: " + path);
    json header = parse_object(line, path);
    Corpus corpus;
    try {
        if (header.at("format") != "attnlab_corpus" || header.at("version") != 1)
            throw InvalidInput("unrecognized corpus format: " + path);
        corpus.vocab_size = header.at("vocab_size").get<size_t>();
        corpus.seq_len = header.at("seq_len").get<size_t>();
        corpus.generator_spec = header.at("generator_spec").get<std::string>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json row = json::parse(line, nullptr, false);
            if (row.is_discarded() || !row.is_array())
                throw InvalidInput("malformed corpus line in " + path);
            corpus.sequences.push_back(row.get<TokenSeq>());
        }
    } catch (const json::exception& e) {
        throw InvalidInput("malformed corpus " + path + ": " + e.what());
    }
    corpus.validate();
    return corpus;
}

}  // namespace attnlab
