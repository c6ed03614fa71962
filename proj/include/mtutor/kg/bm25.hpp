#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mtutor::kg {

/// Lowercased alphanumeric terms with a light plural strip.
std::vector<std::string> terms(std::string_view text);

/// Okapi BM25 over a fixed in-memory corpus.
class Bm25
{
public:
    static constexpr double k1 = 1.2;
    static constexpr double b = 0.75;

    explicit Bm25(std::vector<std::string> const & documents);

    /// One score per document, in corpus order. Documents sharing no term
    /// with the query score exactly 0.
    [[nodiscard]] std::vector<double> scores(std::string_view query) const;

    [[nodiscard]] std::size_t size() const { return lengths_.size(); }

private:
    std::vector<std::map<std::string, int>> tf_;
    std::vector<double> lengths_;
    std::map<std::string, int> df_;
    double avg_len_ = 0;
};

/// Indices with score > 0, best first, ties by lower index. At most `k`.
std::vector<std::size_t> top_k(std::vector<double> const & scores, std::size_t k);

} // namespace mtutor::kg
