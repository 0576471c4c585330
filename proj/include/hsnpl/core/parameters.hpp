#pragma once

#include "hsnpl/core/autodiff.hpp"
#include "hsnpl/core/errors.hpp"
#include "hsnpl/core/rng.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace hsnpl {

using Matrix = Eigen::MatrixXd;

/// Named dense tensors in insertion order.
class ParameterStore {
public:
    void add(const std::string& name, Matrix value) {
        if (index_.contains(name)) throw ValidationError("duplicate parameter name " + name);
        index_[name] = values_.size();
        names_.push_back(name);
        values_.push_back(std::move(value));
    }

    [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }

    Matrix& at(const std::string& name) { return values_[lookup(name)]; }
    [[nodiscard]] const Matrix& at(const std::string& name) const { return values_[lookup(name)]; }

    Matrix& at(std::size_t i) { return values_.at(i); }
    [[nodiscard]] const Matrix& at(std::size_t i) const { return values_.at(i); }

    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] std::size_t size() const { return values_.size(); }

    [[nodiscard]] std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
        return n;
    }

    /// Same names, all-zero values.
    [[nodiscard]] ParameterStore zeros_like() const {
        ParameterStore z;
        for (std::size_t i = 0; i < values_.size(); ++i) z.add(names_[i], Matrix::Zero(values_[i].rows(), values_[i].cols()));
        return z;
    }

private:
    [[nodiscard]] std::size_t lookup(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValidationError("unknown parameter " + name);
        return it->second;
    }

    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
    std::vector<Matrix> values_;
};

/// Parameters registered as differentiable leaves on one tape.
class BoundParameters {
public:
    BoundParameters(ad::Tape& tape, const ParameterStore& store) : store_(&store) {
        for (std::size_t i = 0; i < store.size(); ++i) vars_.push_back(tape.variable(store.at(i)));
    }

    [[nodiscard]] ad::Var operator[](const std::string& name) const {
        for (std::size_t i = 0; i < store_->size(); ++i)
            if (store_->names()[i] == name) return vars_[i];
        throw ValidationError("unknown parameter " + name);
    }

    [[nodiscard]] const std::vector<ad::Var>& all() const { return vars_; }

    /// Gradients after tape.backward(), in store order.
    [[nodiscard]] ParameterStore gradients(const ad::Tape& tape) const {
        ParameterStore g;
        for (std::size_t i = 0; i < vars_.size(); ++i) g.add(store_->names()[i], tape.gradient(vars_[i]));
        return g;
    }

private:
    const ParameterStore* store_;
    std::vector<ad::Var> vars_;
};

/// Glorot-uniform matrix.
inline Matrix xavier(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-limit, limit);
    return m;
}

} // namespace hsnpl
