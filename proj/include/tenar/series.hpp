#pragma once

#include "tenar/tensor.hpp"
#include "tenar/types.hpp"

namespace tenar {

/// Time-ordered collection of equally shaped tensors, obs[0] earliest.
struct TensorSeries {
  Dims dims;
  std::vector<DenseTensor> obs;

  Index length() const { return static_cast<Index>(obs.size()); }

  void validate() const {
    if (dims.empty()) throw InvalidInput("series: no modes");
    for (const DenseTensor& x : obs)
      if (x.dims() != dims)
        throw InvalidInput("series: observation dims differ from header");
  }
};

}  // namespace tenar
