#pragma once

#include "price/model.hpp"
#include "price/tensor.hpp"

namespace price::testing {

/// Straight-line loop implementation of one encoder block in inference mode,
/// written without the tape so it can serve as an oracle for attention_block.
Matrix reference_attention(const Matrix& tokens, const AttentionBlock& block, double epsilon = 1e-12);

}  // namespace price::testing
