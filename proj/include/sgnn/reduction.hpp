#pragma once

#include "sgnn/baselines.hpp"
#include "sgnn/somp.hpp"

namespace sgnn {

/// Object-aware SOMP whose masks hide the object and gravity channels so that
/// it computes exactly what `gmn` computes (GMN must not be subequivariant).
SOMPParams somp_masked_as_gmn(const BaselineParams& gmn, int object_scalar_dim);

/// GMN restricted to the relative-position channel, without normalization,
/// whose update network is assembled from the EGNN velocity/feature networks.
BaselineParams gmn_masked_as_egnn(const BaselineParams& egnn);

}  // namespace sgnn
