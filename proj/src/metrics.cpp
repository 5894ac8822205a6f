#include "t2ue/eval/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

#include "t2ue/core/graph.hpp"
#include "t2ue/core/ops.hpp"

namespace t2ue {

int rank_of_correct(const std::vector<double>& scores, int correct_index) {
    if (correct_index < 0 || correct_index >= static_cast<int>(scores.size()))
        throw std::out_of_range("rank_of_correct: index out of range");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("rank_of_correct: non-finite score");
    const double ref = scores[static_cast<size_t>(correct_index)];
    int rank = 1;
    for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
        if (scores[static_cast<size_t>(j)] > ref) ++rank;
        else if (scores[static_cast<size_t>(j)] == ref && j < correct_index) ++rank;
    }
    return rank;
}

int rank_of_best(const std::vector<double>& scores, const std::vector<int>& correct_set) {
    if (correct_set.empty()) throw std::invalid_argument("rank_of_best: empty ground-truth set");
    int best = static_cast<int>(scores.size());
    for (int c : correct_set) best = std::min(best, rank_of_correct(scores, c));
    return best;
}

double median_rank(const std::vector<int>& ranks) {
    if (ranks.empty()) throw std::invalid_argument("median_rank: empty rank list");
    std::vector<int> s = ranks;
    std::sort(s.begin(), s.end());
    size_t n = s.size();
    if (n % 2 == 1) return static_cast<double>(s[n / 2]);
    return 0.5 * (static_cast<double>(s[n / 2 - 1]) + static_cast<double>(s[n / 2]));
}

RetrievalResult retrieval_from_scores(const MatrixRM<double>& scores, const std::vector<std::vector<int>>& gt,
                                      const std::vector<int>& k_list, const std::string& direction) {
    if (static_cast<size_t>(scores.rows()) != gt.size())
        throw std::invalid_argument("retrieval_from_scores: query/gt count mismatch");
    RetrievalResult r;
    r.direction = direction;
    const int nq = static_cast<int>(scores.rows());
    const int nc = static_cast<int>(scores.cols());
    std::vector<double> row(static_cast<size_t>(nc));
    for (int i = 0; i < nq; ++i) {
        for (int j = 0; j < nc; ++j) row[static_cast<size_t>(j)] = scores(i, j);
        r.ranks.push_back(rank_of_best(row, gt[static_cast<size_t>(i)]));
    }
    for (int k : k_list) {
        int hit = 0;
        for (int rank : r.ranks)
            if (rank <= k) ++hit;
        r.hit_at[k] = 100.0 * static_cast<double>(hit) / static_cast<double>(nq);
    }
    r.medr = median_rank(r.ranks);
    return r;
}

MatrixRM<float> embed_images(DualEncoder<float>& model, const Dataset& data, int batch_size) {
    MatrixRM<float> out(data.size(), model.cfg.embed_dim);
    for (int start = 0; start < data.size(); start += batch_size) {
        int n = std::min(batch_size, data.size() - start);
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = start + i;
        Graph<float> g;
        Binder<float> bind(g, false);
        Var<float> e = model.encode_image(bind, g.leaf(data.image_batch(idx)), false);
        out.middleRows(start, n) = e.value().mat(n, model.cfg.embed_dim);
    }
    return out;
}

MatrixRM<float> embed_captions(DualEncoder<float>& model, const std::vector<std::string>& captions,
                               int batch_size) {
    MatrixRM<float> out(static_cast<int>(captions.size()), model.cfg.embed_dim);
    for (int start = 0; start < static_cast<int>(captions.size()); start += batch_size) {
        int n = std::min(batch_size, static_cast<int>(captions.size()) - start);
        std::vector<std::string> chunk(captions.begin() + start, captions.begin() + start + n);
        Graph<float> g;
        Binder<float> bind(g, false);
        Var<float> raw = model.encode_text_raw(bind, chunk);
        Var<float> norm = l2_normalize_rows(raw);
        out.middleRows(start, n) = norm.value().mat(n, model.cfg.embed_dim);
    }
    return out;
}

RetrievalPair retrieval_eval(DualEncoder<float>& model, const Dataset& testset, const std::vector<int>& k_list) {
    if (testset.size() == 0) throw std::invalid_argument("retrieval_eval: empty test set");

    // distinct caption pool, first-appearance order
    std::vector<std::string> captions;
    std::vector<int> caption_class;
    std::set<std::string> seen;
    int duplicates = 0;
    for (const auto& s : testset.samples) {
        if (seen.insert(s.caption).second) {
            captions.push_back(s.caption);
            caption_class.push_back(s.class_id);
        } else {
            ++duplicates;
        }
    }
    static std::atomic<bool> warned{false};
    if (duplicates > 0 && !warned.exchange(true)) {
        std::cerr << "[retrieval_eval] note: " << duplicates << " duplicate captions collapsed into a pool of "
                  << captions.size() << " (reported once)\n";
    }

    MatrixRM<float> img = embed_images(model, testset);
    MatrixRM<float> txt = embed_captions(model, captions);
    MatrixRM<double> sim = (img.cast<double>() * txt.cast<double>().transpose());

    const int ni = testset.size();
    const int nt = static_cast<int>(captions.size());
    std::vector<std::vector<int>> gt_i2t(static_cast<size_t>(ni));
    for (int i = 0; i < ni; ++i)
        for (int j = 0; j < nt; ++j)
            if (caption_class[static_cast<size_t>(j)] == testset.samples[static_cast<size_t>(i)].class_id)
                gt_i2t[static_cast<size_t>(i)].push_back(j);
    std::vector<std::vector<int>> gt_t2i(static_cast<size_t>(nt));
    for (int j = 0; j < nt; ++j)
        for (int i = 0; i < ni; ++i)
            if (testset.samples[static_cast<size_t>(i)].class_id == caption_class[static_cast<size_t>(j)])
                gt_t2i[static_cast<size_t>(j)].push_back(i);

    RetrievalPair pair;
    pair.num_images = ni;
    pair.num_captions = nt;
    pair.i2t = retrieval_from_scores(sim, gt_i2t, k_list, "i2t");
    MatrixRM<double> simT = sim.transpose();
    pair.t2i = retrieval_from_scores(simT, gt_t2i, k_list, "t2i");
    return pair;
}

double accuracy_from_logits(const MatrixRM<double>& logits, const std::vector<int>& labels) {
    if (logits.rows() == 0) throw std::invalid_argument("accuracy: empty evaluation set");
    if (static_cast<size_t>(logits.rows()) != labels.size())
        throw std::invalid_argument("accuracy: label count mismatch");
    int correct = 0;
    for (int i = 0; i < logits.rows(); ++i) {
        int arg = 0;
        double best = logits(i, 0);
        for (int j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > best) {  // strict: ties keep the lowest index
                best = logits(i, j);
                arg = j;
            }
        if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= logits.cols())
            throw std::invalid_argument("accuracy: label out of range");
        if (arg == labels[static_cast<size_t>(i)]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(logits.rows());
}

double classify_eval(Classifier<float>& model, const Dataset& testset, int batch_size) {
    if (testset.size() == 0) throw std::invalid_argument("classify_eval: empty test set");
    MatrixRM<double> logits(testset.size(), model.num_classes);
    for (int start = 0; start < testset.size(); start += batch_size) {
        int n = std::min(batch_size, testset.size() - start);
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = start + i;
        Graph<float> g;
        Binder<float> bind(g, false);
        Var<float> l = model.logits(bind, g.leaf(testset.image_batch(idx)), false);
        logits.middleRows(start, n) = l.value().mat(n, model.num_classes).cast<double>();
    }
    std::vector<int> labels;
    labels.reserve(static_cast<size_t>(testset.size()));
    for (const auto& s : testset.samples) labels.push_back(s.class_id);
    return accuracy_from_logits(logits, labels);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

double median_of(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median_of: empty list");
    std::sort(values.begin(), values.end());
    size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace t2ue
