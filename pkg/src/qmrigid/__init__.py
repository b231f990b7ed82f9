"""Finite-sample tools for quasi-Mobius rigidity computations."""
from importlib import metadata as _md

from .campaign import CampaignConfig, emit_plot_data, run_campaign
from .chain_metric import build_cover, build_nerve, chain_distance, desnowflake
from .cube_inequality import CubeCover, check_length_volume, random_box_cover
from .generators import GeneratorSpec, generate
from .group_actions import (
    GroupActionModel, MobiusIsometry, boundary_action, conformal_elevator, entropy,
    limit_set_sample, orbit_ball, parse_group, separate_triple,
)
from .hyperbolic_core import (
    BasedSpace, BoundarySample, acu_check, four_point_delta, gromov_products, visual_metric,
)
from .metric_core import (
    FiniteMetricSpace, Quadruple, ahlfors_fit, cross_ratio, max_separated_net, qm_distortion,
    snowflake,
)

try:
    __version__ = _md.version("qmrigid")
except _md.PackageNotFoundError:  # pragma: no cover
    __version__ = "0+unknown"
