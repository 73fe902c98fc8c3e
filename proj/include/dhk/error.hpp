#pragma once

#include <stdexcept>
#include <string>

namespace dhk {

// Every failure the library can signal. CLI maps these onto exit codes.
enum class Errc {
    // tree construction / queries
    empty_tree,
    multiple_roots,
    cycle,
    duplicate_child,
    invalid_node,
    not_a_leaf,
    invalid_tree,
    // losses
    length_mismatch,
    gamma_out_of_range,
    empty_input,
    non_positive_beta,
    // triplets / embeddings
    dimension_mismatch,
    zero_vector,
    index_out_of_range,
    invalid_triplet,
    // signal
    window_too_large,
    non_positive_step,
    signal_too_short,
    all_zero_spectrum,
    // trainer
    invalid_shape,
    shape_mismatch,
    empty_dataset,
    label_not_in_tree,
    // cli
    config_parse,
    io_error,
    checkpoint_corrupt,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace dhk
