"""Lipschitz perturbations that flatten unrectifiable point clouds.

The library works with finite metric spaces. It measures how spread out a
point cloud is (Hausdorff-style content at a scale), finds the directions the
cloud locally follows (discrete tangent fields), and builds small Lipschitz
perturbations that push the cloud onto lower dimensional position, shrinking
its content. The converse tools give lower bounds that certify when no small
perturbation can do that.
"""

__version__ = "0.1.0"

from .metric import (
    FiniteMetricSpace,
    CurveFragment,
    LipschitzMap,
    kuratowski_embed,
    max_epsilon_net,
    neighborhood_graph,
)
from .normgeom import (
    NormedSpace,
    adapted_basis,
    operator_norm,
    polytope_norm,
    unconditional_constant,
)
from .content import greedy_content, packing_lower_bound, grid_content
from .tangent import fit_tangent_field, partition_by_field, TangentField
from .perturb import scalar_perturb, vector_perturb, glue, shrink_to_budget, flatten
from .converse import degree_coverage, rect_lower_bound, positive_image_perturb
from . import corpus

__all__ = [
    "FiniteMetricSpace",
    "CurveFragment",
    "LipschitzMap",
    "NormedSpace",
    "TangentField",
    "adapted_basis",
    "corpus",
    "degree_coverage",
    "fit_tangent_field",
    "flatten",
    "glue",
    "greedy_content",
    "grid_content",
    "kuratowski_embed",
    "max_epsilon_net",
    "neighborhood_graph",
    "operator_norm",
    "packing_lower_bound",
    "partition_by_field",
    "polytope_norm",
    "positive_image_perturb",
    "rect_lower_bound",
    "scalar_perturb",
    "shrink_to_budget",
    "unconditional_constant",
    "vector_perturb",
]
