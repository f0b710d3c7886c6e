"""Quasi-framelet graph transforms, their Chebyshev fast algorithm, and QUFG networks."""
from .chebyshev import (
    FastTransformPlan,
    apply_filter,
    cutoff_mask,
    fast_decompose,
    fast_reconstruct,
    fit_filter,
    make_plan,
)
from .data import NodeDataset, compute_metrics, load_dataset
from .errors import (
    CapabilityError,
    ConfigError,
    InputError,
    LoadError,
    QFrameletError,
    SchemaError,
)
from .exact import (
    EigenSystem,
    FrameletCoefficients,
    build_transform_blocks,
    decompose_exact,
    eigendecompose,
    framelet_atom,
    make_spec,
    reconstruct_exact,
)
from .experiment import load_config, run_experiment
from .graph import (
    Graph,
    HeteroGraph,
    MetaPath,
    build_graph,
    make_hetero_graph,
    metapath_adjacency,
    normalized_laplacian,
)
from .modulation import ModulationFamily, entropy, evaluate, make_family, sigmoid, validate_partition
from .nn import HeteroModelParams, NetworkParams, TrainConfig, train

__version__ = "0.1.0"
