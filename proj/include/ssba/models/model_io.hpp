#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "ssba/models/linear.hpp"
#include "ssba/models/mlp.hpp"
#include "ssba/models/random_forest.hpp"

namespace ssba {

// Model file (text, whitespace separated):
//
//   ssba-model 1
//   family <logistic|linear_svm|mlp|random_forest>
//   width <n>
//   <family parameter block>
//
// Reals are written in shortest round-trip form, so load(save(m)) predicts bit-identically.

inline constexpr int model_format_version = 1;

inline void save_model(std::ostream& out, const Classifier& model) {
    out << "ssba-model " << model_format_version << "\nfamily " << model.family() << "\nwidth " << model.width() << '\n';
    model.write_parameters(out);
}

inline void save_model(const std::string& path, const Classifier& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot write model file '" + path + "'");
    save_model(out, model);
}

[[nodiscard]] inline ClassifierPtr load_model(std::istream& in) {
    detail::TokenReader r(in);
    r.expect("ssba-model");
    if (const auto v = r.integer(); v != model_format_version)
        throw format_error("unsupported model file version " + std::to_string(v));
    r.expect("family");
    const auto family = r.word();
    r.expect("width");
    const auto width = r.count();

    ClassifierPtr model;
    if (family == "logistic" || family == "linear_svm")
        model = LinearModel::read(family, r);
    else if (family == "mlp")
        model = Mlp::read(r);
    else if (family == "random_forest")
        model = RandomForest::read(width, r);
    else
        throw format_error("unknown model family '" + family + "'");
    if (model->width() != width) throw format_error("model file: width header disagrees with parameters");
    return model;
}

[[nodiscard]] inline ClassifierPtr load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open model file '" + path + "'");
    return load_model(in);
}

}  // namespace ssba
