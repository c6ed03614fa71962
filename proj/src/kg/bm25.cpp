#include "mtutor/kg/bm25.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace mtutor::kg {

namespace {

std::string stem(std::string w)
{
    if (w.size() > 4 && w.compare(w.size() - 3, 3, "ies") == 0)
        return w.substr(0, w.size() - 3) + "y";
    if (w.size() > 3 && w.back() == 's' && w[w.size() - 2] != 's' && w[w.size() - 2] != 'u' &&
        w[w.size() - 2] != 'i')
        w.pop_back();
    return w;
}

} // namespace

std::vector<std::string> terms(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty())
            out.push_back(stem(std::move(cur)));
        cur.clear();
    };
    for (char ch : text) {
        auto const c = static_cast<unsigned char>(ch);
        if (std::isalnum(c))
            cur += static_cast<char>(std::tolower(c));
        else
            flush();
    }
    flush();
    return out;
}

Bm25::Bm25(std::vector<std::string> const & documents)
{
    double total = 0;
    for (auto const & d : documents) {
        std::map<std::string, int> tf;
        auto const ts = terms(d);
        for (auto const & t : ts)
            ++tf[t];
        for (auto const & [t, n] : tf)
            ++df_[t];
        lengths_.push_back(static_cast<double>(ts.size()));
        total += static_cast<double>(ts.size());
        tf_.push_back(std::move(tf));
    }
    avg_len_ = documents.empty() ? 0.0 : total / static_cast<double>(documents.size());
}

std::vector<double> Bm25::scores(std::string_view query) const
{
    std::vector<double> out(tf_.size(), 0.0);
    auto const qt = terms(query);
    std::set<std::string> const unique(qt.begin(), qt.end());
    double const n = static_cast<double>(tf_.size());
    for (auto const & t : unique) {
        auto it = df_.find(t);
        if (it == df_.end())
            continue;
        double const df = it->second;
        double const idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        for (std::size_t i = 0; i < tf_.size(); ++i) {
            auto f = tf_[i].find(t);
            if (f == tf_[i].end())
                continue;
            double const tf = f->second;
            double const norm = avg_len_ > 0 ? lengths_[i] / avg_len_ : 1.0;
            out[i] += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * norm));
        }
    }
    return out;
}

std::vector<std::size_t> top_k(std::vector<double> const & scores, std::size_t k)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > 0)
            idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return scores[a] > scores[c]; });
    if (idx.size() > k)
        idx.resize(k);
    return idx;
}

} // namespace mtutor::kg
