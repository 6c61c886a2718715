#pragma once

#include <memory>

#include "poly/clf.hpp"

namespace poly::clf::detail {

/// Hashed bag-of-words encoder (embedding -> mean pool -> tanh layer ->
/// dropout) with either a two-way softmax head or a tiny autoregressive label
/// decoder, depending on the family.
std::unique_ptr<Backbone> make_stub_tiny(const BackboneSpec& spec, const FineTuneConfig& cfg);

}  // namespace poly::clf::detail
