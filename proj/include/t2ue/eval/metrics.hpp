#pragma once

#include <map>
#include <string>
#include <vector>

#include "t2ue/core/tensor.hpp"
#include "t2ue/data/dataset.hpp"
#include "t2ue/models/classifier.hpp"
#include "t2ue/models/dual_encoder.hpp"

namespace t2ue {

/// 1-based rank of `correct_index` in a score row; ties break toward the
/// smaller candidate index.
int rank_of_correct(const std::vector<double>& scores, int correct_index);

/// Best (lowest) rank over a ground-truth candidate set.
int rank_of_best(const std::vector<double>& scores, const std::vector<int>& correct_set);

/// Median of ranks; even counts average the two middle elements.
double median_rank(const std::vector<int>& ranks);

struct RetrievalResult {
    std::string direction;  // "i2t" or "t2i"
    std::map<int, double> hit_at;
    double medr = 0.0;
    std::vector<int> ranks;
};

/// Metric core over an explicit score matrix: one query per row, one
/// ground-truth index set per query.
RetrievalResult retrieval_from_scores(const MatrixRM<double>& scores, const std::vector<std::vector<int>>& gt,
                                      const std::vector<int>& k_list, const std::string& direction);

struct RetrievalPair {
    RetrievalResult i2t;
    RetrievalResult t2i;
    int num_images = 0;
    int num_captions = 0;  // distinct caption pool size
};

/// Cross-modal retrieval on a captioned test set. The caption pool is the
/// set of distinct captions in the split; a retrieved candidate counts as
/// correct when its class matches the query's class (every template of a
/// class describes its images), mirroring multi-caption retrieval protocols.
RetrievalPair retrieval_eval(DualEncoder<float>& model, const Dataset& testset, const std::vector<int>& k_list);

/// Top-1 accuracy in percent; argmax ties resolve to the lowest class index.
double classify_eval(Classifier<float>& model, const Dataset& testset, int batch_size = 100);

/// Accuracy from precomputed logits (one row per sample).
double accuracy_from_logits(const MatrixRM<double>& logits, const std::vector<int>& labels);

/// Round to 2 decimals for reporting.
double round2(double v);

/// Median of a value list (middle element; even counts average the two).
double median_of(std::vector<double> values);

/// Normalized image embeddings for a whole dataset, batched, inference mode.
MatrixRM<float> embed_images(DualEncoder<float>& model, const Dataset& data, int batch_size = 100);

/// Normalized embeddings for a list of captions.
MatrixRM<float> embed_captions(DualEncoder<float>& model, const std::vector<std::string>& captions,
                               int batch_size = 256);

}  // namespace t2ue
