"""Tail measures of weighted sums and products: forward maps, cancellation
checks, Neumann-series inversion and log-periodic counterexample laws."""

__version__ = "0.1.0"

from .measures import (  # noqa: E402
    DiscreteMeasure,
    EvalSet,
    HalfLineProduct,
    HomogeneousTailMeasure,
    MeasureError,
    NormExceed,
    Rect,
    make_discrete,
    pushforward,
    quadrant_split,
    tail_eval,
)
from .forward import ProductLaw, WeightFamily, mult_convolve, product_tail, scalar_weight_tail, weighted_sum_tail  # noqa: E402

__all__ = [
    "DiscreteMeasure",
    "EvalSet",
    "HalfLineProduct",
    "HomogeneousTailMeasure",
    "MeasureError",
    "NormExceed",
    "ProductLaw",
    "Rect",
    "WeightFamily",
    "make_discrete",
    "mult_convolve",
    "product_tail",
    "pushforward",
    "quadrant_split",
    "scalar_weight_tail",
    "tail_eval",
    "weighted_sum_tail",
]
