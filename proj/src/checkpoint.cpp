#include "safemaddpg/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace safemaddpg {

namespace {

std::string hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_double(const std::string& tok, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw std::runtime_error(std::string("checkpoint: bad ") + what + " value '" + tok + "'");
    return v;
}

std::string expect_token(std::istream& in, const char* what) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error(std::string("checkpoint: missing ") + what);
    return tok;
}

}  // namespace

void save_mlp(const Mlp& mlp, std::ostream& out) {
    out << "mlp-checkpoint v1\n";
    out << "layers";
    for (int d : mlp.layer_dims) out << ' ' << d;
    out << '\n';
    out << "hidden " << activation_name(mlp.hidden_activation) << '\n';
    out << "output " << activation_name(mlp.output_activation) << '\n';
    for (int l = 0; l < mlp.n_layers(); ++l) {
        const auto& w = mlp.weights[l];
        out << 'W' << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
        for (long i = 0; i < w.rows(); ++i) {
            for (long j = 0; j < w.cols(); ++j) out << (j ? " " : "") << hex_double(w(i, j));
            out << '\n';
        }
        const auto& b = mlp.biases[l];
        out << 'b' << l << ' ' << b.size() << '\n';
        for (long i = 0; i < b.size(); ++i) out << (i ? " " : "") << hex_double(b(i));
        out << '\n';
    }
}

void save_mlp(const Mlp& mlp, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + file.string());
    save_mlp(mlp, out);
    if (!out) throw std::runtime_error("checkpoint: write failed: " + file.string());
}

Mlp load_mlp(std::istream& in) {
    std::string magic, version;
    if (!(in >> magic >> version) || magic != "mlp-checkpoint" || version != "v1")
        throw std::runtime_error("checkpoint: bad header");

    Mlp mlp;
    std::string key = expect_token(in, "layers keyword");
    if (key != "layers") throw std::runtime_error("checkpoint: expected 'layers'");
    std::string line;
    std::getline(in, line);
    std::istringstream dims(line);
    int d;
    while (dims >> d) mlp.layer_dims.push_back(d);
    if (mlp.layer_dims.size() < 2) throw std::runtime_error("checkpoint: needs at least 2 layer dims");

    if (expect_token(in, "hidden keyword") != "hidden") throw std::runtime_error("checkpoint: expected 'hidden'");
    mlp.hidden_activation = activation_from_name(expect_token(in, "hidden activation"));
    if (expect_token(in, "output keyword") != "output") throw std::runtime_error("checkpoint: expected 'output'");
    mlp.output_activation = activation_from_name(expect_token(in, "output activation"));

    const int L = static_cast<int>(mlp.layer_dims.size()) - 1;
    for (int l = 0; l < L; ++l) {
        std::string wkey = expect_token(in, "weight block");
        if (wkey != "W" + std::to_string(l)) throw std::runtime_error("checkpoint: expected W" + std::to_string(l));
        long rows = 0, cols = 0;
        if (!(in >> rows >> cols)) throw std::runtime_error("checkpoint: bad weight shape");
        if (rows != mlp.layer_dims[l + 1] || cols != mlp.layer_dims[l])
            throw std::runtime_error("checkpoint: weight shape disagrees with layer dims");
        Eigen::MatrixXd w(rows, cols);
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < cols; ++j) w(i, j) = parse_double(expect_token(in, "weight"), "weight");
        mlp.weights.push_back(std::move(w));

        std::string bkey = expect_token(in, "bias block");
        if (bkey != "b" + std::to_string(l)) throw std::runtime_error("checkpoint: expected b" + std::to_string(l));
        long len = 0;
        if (!(in >> len)) throw std::runtime_error("checkpoint: bad bias length");
        if (len != mlp.layer_dims[l + 1]) throw std::runtime_error("checkpoint: bias length disagrees with layer dims");
        Eigen::VectorXd b(len);
        for (long i = 0; i < len; ++i) b(i) = parse_double(expect_token(in, "bias"), "bias");
        mlp.biases.push_back(std::move(b));
    }
    return mlp;
}

Mlp load_mlp(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + file.string());
    return load_mlp(in);
}

}  // namespace safemaddpg
