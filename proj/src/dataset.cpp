#include "mgcn/dataset.hpp"

#include "mgcn/error.hpp"

namespace mgcn {

void Dataset::validate() const {
    if (num_rois == 0) throw ValidationError("dataset: zero ROIs");
    if (modalities.empty()) throw ValidationError("dataset: no modalities");
    if (labels.empty()) throw ValidationError("dataset: no subjects");
    if (subject_ids.size() != labels.size()) {
        throw ValidationError("dataset: " + std::to_string(subject_ids.size()) + " subject ids but " +
                              std::to_string(labels.size()) + " labels");
    }
    if (series.size() != modalities.size()) throw ValidationError("dataset: series/modality count mismatch");
    for (std::size_t m = 0; m < modalities.size(); ++m) {
        if (series[m].size() != labels.size()) {
            throw ValidationError("dataset: modality '" + modalities[m].name + "' is missing subjects");
        }
        for (std::size_t n = 0; n < labels.size(); ++n) {
            const Tensor& x = series[m][n];
            if (x.rows() != num_rois || x.cols() != modalities[m].length) {
                throw ValidationError("dataset: subject '" + subject_ids[n] + "' modality '" + modalities[m].name +
                                      "' has shape " + x.shape_string() + ", expected " +
                                      std::to_string(num_rois) + "x" + std::to_string(modalities[m].length));
            }
        }
    }
    if (!fn_labels.empty() && fn_labels.size() != num_rois) {
        throw ValidationError("dataset: " + std::to_string(fn_labels.size()) + " network labels for " +
                              std::to_string(num_rois) + " ROIs");
    }
}

std::size_t Dataset::modality_index(const std::string& name) const {
    for (std::size_t m = 0; m < modalities.size(); ++m)
        if (modalities[m].name == name) return m;
    throw ValidationError("dataset: no modality named '" + name + "'");
}

Dataset Dataset::select_modalities(const std::vector<std::size_t>& which) const {
    Dataset out;
    out.num_rois = num_rois;
    out.subject_ids = subject_ids;
    out.labels = labels;
    out.fn_labels = fn_labels;
    out.provenance = provenance;
    for (std::size_t m : which) {
        if (m >= modalities.size()) throw ValidationError("dataset: modality index out of range");
        out.modalities.push_back(modalities[m]);
        out.series.push_back(series[m]);
    }
    return out;
}

} // namespace mgcn
