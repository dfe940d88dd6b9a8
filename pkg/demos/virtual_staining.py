"""Run the staining network on a synthetic phase scene.

Two passes: once with zero weights, where the residual head makes the
network an exact identity on the normalized input, and once with random
weights to show a real forward pass at full depth.
"""

import numpy as np

from pics.imagecore import Raster
from pics.stain_infer import (
    NetSpec,
    infer_stain,
    normalize_for_ml,
    random_weights,
    zero_weights,
)

rng = np.random.default_rng(7)
scene = rng.uniform(0.0, 2.0, (120, 160)).astype(np.float32)
raster = Raster(scene, 0.1)

spec = NetSpec()
print(f"network          depth {spec.depth}, {spec.param_count():,} parameters")

identity = infer_stain(raster, spec, zero_weights(spec), rho_min=0.0, rho_max=2.0)
reference = normalize_for_ml(raster, 0.0, 2.0)
print(f"zero weights     identity exact: {np.array_equal(identity.raster.data, reference.data)}")

stained = infer_stain(raster, spec, random_weights(spec, seed=3), rho_min=0.0, rho_max=2.0)
data = stained.raster.data
print(f"random weights   output {data.shape}, range [{data.min():.3f}, {data.max():.3f}]")
print(f"                 mean {data.mean():.3f} (inputs normalized to [0, 1])")
