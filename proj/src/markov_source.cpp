#include "scdd/markov_source.hpp"

#include "scdd/error.hpp"

#include <cmath>
#include <fstream>

namespace scdd {

namespace {

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log(v);
        }
    }
    return h;
}

MarkovSource finish(MarkovSource s) {
    s.K = static_cast<int>(s.init.size());
    s.validate();
    const auto pi = s.stationary();
    s.entropy_rate = 0.0;
    for (int i = 0; i < s.K; ++i) {
        s.entropy_rate += pi[i] * entropy(s.trans[i]);
    }
    return s;
}

} // namespace

MarkovSource MarkovSource::sticky(int K, double zipf, double stickiness) {
    if (K < 1) {
        throw InvalidArgument("source needs K >= 1");
    }
    if (!(zipf >= 0.0) || !(stickiness >= 0.0 && stickiness <= 1.0)) {
        throw InvalidArgument("invalid sticky source parameters");
    }
    std::vector<double> z(K);
    double norm = 0.0;
    for (int i = 0; i < K; ++i) {
        z[i] = std::pow(i + 1.0, -zipf);
        norm += z[i];
    }
    for (auto& v : z) {
        v /= norm;
    }
    std::vector<std::vector<double>> trans(K, std::vector<double>(K));
    for (int i = 0; i < K; ++i) {
        for (int j = 0; j < K; ++j) {
            trans[i][j] = (1.0 - stickiness) * z[j] + (i == j ? stickiness : 0.0);
        }
    }
    return from_matrices(z, trans);
}

MarkovSource MarkovSource::uniform(int K) {
    return sticky(K, 0.0, 0.0);
}

MarkovSource MarkovSource::constant(int K, Token token) {
    if (K < 1 || token < 0 || token >= K) {
        throw InvalidArgument("constant source token out of range");
    }
    std::vector<double> init(K, 0.0);
    init[token] = 1.0;
    return from_matrices(init, std::vector<std::vector<double>>(K, init));
}

MarkovSource MarkovSource::from_matrices(std::vector<double> init, std::vector<std::vector<double>> trans) {
    MarkovSource s;
    s.init = std::move(init);
    s.trans = std::move(trans);
    return finish(std::move(s));
}

MarkovSource MarkovSource::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot open source file " + path.string());
    }
    int K = 0;
    if (!(in >> K) || K < 1) {
        throw ParseError("source file: bad K");
    }
    std::vector<double> init(K);
    std::vector<std::vector<double>> trans(K, std::vector<double>(K));
    for (auto& v : init) {
        if (!(in >> v)) {
            throw ParseError("source file: truncated initial distribution");
        }
    }
    for (auto& row : trans) {
        for (auto& v : row) {
            if (!(in >> v)) {
                throw ParseError("source file: truncated transition matrix");
            }
        }
    }
    return from_matrices(init, trans);
}

void MarkovSource::validate() const {
    if (K < 1 || static_cast<int>(init.size()) != K || static_cast<int>(trans.size()) != K) {
        throw InvalidArgument("source shapes inconsistent");
    }
    if (!is_simplex(init)) {
        throw InvalidArgument("source initial distribution is not a simplex");
    }
    for (const auto& row : trans) {
        if (static_cast<int>(row.size()) != K || !is_simplex(row)) {
            throw InvalidArgument("source transition row is not a simplex");
        }
    }
}

std::vector<double> MarkovSource::stationary() const {
    // Power iteration on the lazy chain converges for every finite chain.
    std::vector<double> pi(K, 1.0 / K), next(K);
    for (int it = 0; it < 100000; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int i = 0; i < K; ++i) {
            for (int j = 0; j < K; ++j) {
                next[j] += pi[i] * 0.5 * (trans[i][j] + (i == j ? 1.0 : 0.0));
            }
        }
        double diff = 0.0;
        for (int j = 0; j < K; ++j) {
            diff = std::max(diff, std::abs(next[j] - pi[j]));
        }
        pi.swap(next);
        if (diff < 1e-15) {
            break;
        }
    }
    return pi;
}

double MarkovSource::sequence_entropy(int L) const {
    if (L < 1) {
        throw InvalidArgument("sequence_entropy needs L >= 1");
    }
    std::vector<double> mu = init;
    double h = entropy(init);
    for (int l = 1; l < L; ++l) {
        std::vector<double> next(K, 0.0);
        for (int i = 0; i < K; ++i) {
            h += mu[i] * entropy(trans[i]);
            for (int j = 0; j < K; ++j) {
                next[j] += mu[i] * trans[i][j];
            }
        }
        mu.swap(next);
    }
    return h / L;
}

std::vector<std::vector<Token>> generate_corpus(const MarkovSource& source, int L, int count, Rng& rng) {
    if (L < 1 || count < 0) {
        throw InvalidArgument("generate_corpus: bad length or count");
    }
    std::vector<std::vector<Token>> out(static_cast<std::size_t>(count), std::vector<Token>(L));
    for (auto& seq : out) {
        seq[0] = draw_categorical(source.init, rng);
        for (int l = 1; l < L; ++l) {
            seq[l] = draw_categorical(source.trans[seq[l - 1]], rng);
        }
    }
    return out;
}

double exact_oracle_ppl(const MarkovSource& source, std::span<const std::vector<Token>> sequences) {
    double logp = 0.0;
    double tokens = 0.0;
    for (const auto& seq : sequences) {
        for (std::size_t l = 0; l < seq.size(); ++l) {
            if (seq[l] < 0 || seq[l] >= source.K) {
                throw InvalidArgument("exact_oracle_ppl: token out of range");
            }
            const double p = l == 0 ? source.init[seq[0]] : source.trans[seq[l - 1]][seq[l]];
            logp += std::log(p);
        }
        tokens += static_cast<double>(seq.size());
    }
    if (tokens == 0.0) {
        throw InvalidArgument("exact_oracle_ppl: no tokens");
    }
    return std::exp(-logp / tokens);
}

double unigram_entropy(std::span<const std::vector<Token>> sequences, int K) {
    std::vector<double> counts(static_cast<std::size_t>(K), 0.0);
    double n = 0.0;
    for (const auto& seq : sequences) {
        for (Token v : seq) {
            if (v < 0 || v >= K) {
                throw InvalidArgument("unigram_entropy: token out of range");
            }
            counts[v] += 1.0;
            n += 1.0;
        }
    }
    if (n == 0.0) {
        throw InvalidArgument("unigram_entropy: no tokens");
    }
    for (auto& c : counts) {
        c /= n;
    }
    return entropy(counts);
}

} // namespace scdd
