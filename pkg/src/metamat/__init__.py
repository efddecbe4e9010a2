"""Design small-particle acoustic metamaterials with a prescribed refraction coefficient."""

from .fields import (
    DensityField,
    FrequencyGrid,
    MediumConstants,
    SampledField,
    SpatialGrid,
    domain_diameter,
    load_density,
    load_field,
    save_density,
    save_field,
)
from .inversion import choose_density, compute_p, design_material, forward_p, polar_decompose, solve_h
from .placement import nearest_integer, plan_embedding, verify_manifest

__version__ = "0.1.0"
