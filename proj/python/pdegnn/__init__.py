"""PDE-block graph neural networks (C++ core)."""

from ._core import (  # noqa: F401
    Bundle,
    BundleError,
    Graph,
    averaging_matrix,
    dataset_preset,
    evaluate_block,
    gradient_matrix,
    load_bundle,
    make_cycle,
    make_grid_graph,
    make_random,
    propagation_matrix,
    split,
    train,
)

try:
    from ._core import verify  # noqa: F401
except ImportError:  # built without the oracle
    pass

BLOCKS = ("gcn", "advection", "burgers", "diffusion", "wave", "mix_ad", "mix_aw")
