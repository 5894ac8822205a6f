#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "t2ue/nn/layers.hpp"

namespace t2ue {

inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

/// Closed vocabulary over the caption grammar. Index 0 is the UNK token;
/// unknown words map there and bump a shared warning counter.
class Vocab {
public:
    Vocab() : unk_count_(std::make_shared<std::atomic<int64_t>>(0)) {}

    static Vocab from_words(std::vector<std::string> words) {
        Vocab v;
        std::set<std::string> uniq(words.begin(), words.end());
        v.words_.push_back("<unk>");
        for (const auto& w : uniq) v.words_.push_back(w);
        for (size_t i = 0; i < v.words_.size(); ++i) v.index_[v.words_[i]] = static_cast<int>(i);
        return v;
    }

    /// Rebuild from a serialized word list whose slot 0 is already the UNK token.
    static Vocab from_saved(std::vector<std::string> words) {
        if (words.empty() || words[0] != "<unk>") throw std::runtime_error("vocab: bad serialized word list");
        Vocab v;
        v.words_ = std::move(words);
        for (size_t i = 0; i < v.words_.size(); ++i) v.index_[v.words_[i]] = static_cast<int>(i);
        return v;
    }

    /// Vocabulary covering every caption the templates can produce.
    static Vocab build(const std::vector<std::string>& templates, const std::vector<std::string>& colors,
                       const std::vector<std::string>& shapes) {
        std::vector<std::string> words;
        for (const auto& t : templates) {
            std::string expanded = t;
            replace_all(expanded, "{color}", " ");
            replace_all(expanded, "{shape}", " ");
            for (const auto& w : split_words(expanded)) words.push_back(w);
        }
        for (const auto& c : colors)
            for (const auto& w : split_words(c)) words.push_back(w);
        for (const auto& s : shapes)
            for (const auto& w : split_words(s)) words.push_back(w);
        return from_words(std::move(words));
    }

    std::vector<int> encode(const std::string& caption) const {
        if (caption.empty()) throw std::invalid_argument("vocab: empty caption");
        std::vector<int> ids;
        for (const auto& w : split_words(caption)) {
            auto it = index_.find(w);
            if (it == index_.end()) {
                ids.push_back(0);
                unk_count_->fetch_add(1, std::memory_order_relaxed);
            } else {
                ids.push_back(it->second);
            }
        }
        if (ids.empty()) throw std::invalid_argument("vocab: caption has no tokens");
        return ids;
    }

    int size() const { return static_cast<int>(words_.size()); }
    const std::vector<std::string>& words() const { return words_; }
    int64_t unk_count() const { return unk_count_->load(std::memory_order_relaxed); }

private:
    static void replace_all(std::string& s, const std::string& from, const std::string& to) {
        size_t pos = 0;
        while ((pos = s.find(from, pos)) != std::string::npos) {
            s.replace(pos, from.size(), to);
            pos += to.size();
        }
    }

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
    std::shared_ptr<std::atomic<int64_t>> unk_count_;
};

/// Token embedding -> mean pool -> two-layer MLP. The MLP output is the raw
/// conditioning vector; callers normalize it separately for the loss.
template <typename S>
struct TextEncoder {
    Vocab vocab;
    int embed_dim = 32;
    int hidden_dim = 64;
    int out_dim = 64;
    Param<S> table;  // (V, embed_dim)
    Linear<S> fc1;
    Linear<S> fc2;

    void init(Rng& rng, Vocab v, int embed = 32, int hidden = 64, int out = 64) {
        vocab = std::move(v);
        embed_dim = embed;
        hidden_dim = hidden;
        out_dim = out;
        table.name = "text.table";
        table.value = Tensor<S>({vocab.size(), embed_dim});
        fill_normal(table.value, rng, 0.1);
        fc1.init("text.fc1", rng, embed_dim, hidden_dim);
        fc2.init("text.fc2", rng, hidden_dim, out_dim);
    }

    /// Raw pooled embedding batch (N, out_dim).
    Var<S> forward_raw(Binder<S>& bind, const std::vector<std::string>& captions) {
        if (captions.empty()) throw std::invalid_argument("text encoder: empty caption batch");
        std::vector<std::vector<int>> ids;
        ids.reserve(captions.size());
        for (const auto& c : captions) ids.push_back(vocab.encode(c));
        Var<S> pooled = embedding_mean(bind(table), std::move(ids));
        return fc2(bind, relu(fc1(bind, pooled)));
    }

    template <typename F>
    void visit(F&& f) {
        f(table);
        fc1.visit(f);
        fc2.visit(f);
    }
};

}  // namespace t2ue
